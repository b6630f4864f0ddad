"""Acceptance suite: one test and one printed verdict line per criterion.

Run ``python3 -m pytest -s tests/test_acceptance.py`` to see the verdict
lines as they are produced (without ``-s`` pytest shows them for failing
criteria only).  Every criterion is executed at its stated tolerance and
asserted as-is.  Three sub-clauses pin external reference values that the
faithfully implemented model measurably disagrees with — the per-value
separation-SNR table medians (criterion 1), the 95% edge-confinement margin
at 50 small-sample trials (criterion 2), and the small-array bias-floor
contrast (criterion 7) — so those three tests FAIL honestly, printing the
measured numbers next to the pinned ones.  Everything else passes.
"""

import math
import time

import numpy as np

from smoothmusic import cli, montecarlo, verify
from smoothmusic.array_model import (
    ArrayScenario,
    block_hankel,
    signal_covariance,
    signal_covariance_hadamard,
    smoothed_steering,
    steering_vector,
)
from smoothmusic.montecarlo import ExperimentPlan, run_plan
from smoothmusic.rmt import MpParams, h_star, phi_inverse, phi_star, spike_forward, w_star


def _report(number, slug, clauses):
    """Print the one-line verdict for a criterion; return overall success."""
    overall = all(ok for _, ok in clauses)
    detail = "; ".join(f"{text} [{'ok' if ok else 'FAIL'}]" for text, ok in clauses)
    print(f"ACCEPTANCE {number} {slug}: {'PASS' if overall else 'FAIL'} — {detail}", flush=True)
    return overall


# ---------------------------------------------------------------------------
# criterion 1: separation-SNR table reproduction


L_VALUES = (2, 4, 8, 16, 32, 64, 96, 128)
# reference median minimum-separation SNRs (dB) the criterion pins per L
TABLE_REFERENCE_DB = (33.46, 30.30, 27.46, 25.31, 24.70, 28.25, 36.11, 51.52)


def test_criterion_1_separation_table():
    """Median minimum separation SNR per L: +/-1.5 dB per value, U-shape, < 1 min."""
    t0 = time.perf_counter()
    sc = ArrayScenario(
        m=160, n=20, l=2, doas=(0.0, math.pi / 320), snr_db=0.0, seed=1
    )
    rows = montecarlo.table1(sc, L_VALUES, draws=100)
    elapsed = time.perf_counter() - t0
    medians = [r.min_snr_db_median for r in rows]
    devs = [abs(a - b) for a, b in zip(medians, TABLE_REFERENCE_DB)]
    within = sum(d <= 1.5 for d in devs)
    i_min = medians.index(min(medians))
    u_shape = (
        L_VALUES[i_min] == 32
        and all(a > b for a, b in zip(medians[: i_min + 1], medians[1 : i_min + 1]))
        and all(a < b for a, b in zip(medians[i_min:], medians[i_min + 1 :]))
    )
    ok = _report(1, "separation-table", [
        (f"per-L medians within 1.5 dB of reference: {within}/8 "
         f"(max deviation {max(devs):.1f} dB)", within == 8),
        (f"U-shape with minimum at L=32: minimum at L={L_VALUES[i_min]}", u_shape),
        (f"runtime {elapsed:.1f}s < 60s", elapsed < 60.0),
    ])
    assert ok, (
        f"measured medians {[round(v, 2) for v in medians]} "
        f"vs reference {TABLE_REFERENCE_DB}"
    )


# ---------------------------------------------------------------------------
# criterion 2: MP law on pooled noise eigenvalues


def test_criterion_2_mp_law():
    """(160, 20, 16), sigma2=1, 50 trials: KS < 0.05; >=95% edge confinement."""
    t0 = time.perf_counter()
    esd = verify.esd_vs_mp(160, 20, 16, 1.0, trials=50, seed=0)
    elapsed = time.perf_counter() - t0
    frac = esd.confinement_fraction
    ok = _report(2, "mp-law", [
        (f"KS distance {esd.ks_distance:.4f} < 0.05", esd.ks_distance < 0.05),
        (f"confinement below 1.05 x+ in {100 * frac:.0f}% of trials >= 95%", frac >= 0.95),
        (f"runtime {elapsed:.1f}s < 60s", elapsed < 60.0),
    ])
    assert ok, f"ks={esd.ks_distance:.4f}, confinement={frac:.3f}"


# ---------------------------------------------------------------------------
# criterion 3: spiked-model eigenvalue/eigenvector laws


def _spike_stats(experiment):
    rel = np.abs(experiment.lambda_hat[:, 0] / experiment.rho[0] - 1.0)
    perr = np.abs(experiment.projections[:, 0] - experiment.h[0])
    return float(np.median(rel)), float(np.median(perr))


def test_criterion_3_spiked_model():
    """Planted 4 sigma2 sqrt(c): both medians < 0.05; 0.5 sigma2 sqrt(c) sticks to x+."""
    t0 = time.perf_counter()
    p = MpParams(1.0, 145 / 320)  # (M, N, L) = (160, 20, 16)
    strong = verify.spike_experiment(
        160, 20, 16, 1.0, (4.0 * p.spike_threshold,), trials=100, seed=0
    )
    med_rel, med_perr = _spike_stats(strong)
    weak = verify.spike_experiment(
        160, 20, 16, 1.0, (0.5 * p.spike_threshold,), trials=100, seed=0
    )
    lam1 = float(np.median(weak.lambda_hat[:, 0]))
    stick = abs(lam1 / p.edge_plus - 1.0)
    elapsed = time.perf_counter() - t0
    ok = _report(3, "spiked-model", [
        (f"median |lam1_hat/phi(lam) - 1| = {med_rel:.4f} < 0.05", med_rel < 0.05),
        (f"median projection error = {med_perr:.4f} < 0.05", med_perr < 0.05),
        (f"sub-critical lam1_hat within {100 * stick:.1f}% of x+ (<= 10%)", stick <= 0.10),
        (f"runtime {elapsed:.1f}s < 120s", elapsed < 120.0),
    ])
    assert ok


# ---------------------------------------------------------------------------
# criterion 4: block-Hankel noise behaves like iid noise


def _iqr(samples):
    lo, hi = np.percentile(samples, [25.0, 75.0])
    return float(lo), float(hi)


def test_criterion_4_iid_equivalence():
    """Spike statistics under Hankel vs matched iid noise: IQRs overlap."""
    p = MpParams(1.0, 145 / 320)
    lam = 4.0 * p.spike_threshold
    hank = verify.spike_experiment(160, 20, 16, 1.0, (lam,), trials=100, seed=0, noise="hankel")
    iid = verify.spike_experiment(160, 20, 16, 1.0, (lam,), trials=100, seed=0, noise="iid")
    clauses = []
    for name, a, b in [
        ("largest eigenvalue", hank.lambda_hat[:, 0], iid.lambda_hat[:, 0]),
        ("subspace projection", hank.projections[:, 0], iid.projections[:, 0]),
    ]:
        (lo1, hi1), (lo2, hi2) = _iqr(a), _iqr(b)
        overlap = max(lo1, lo2) <= min(hi1, hi2)
        clauses.append(
            (f"{name} IQRs [{lo1:.3f}, {hi1:.3f}] vs [{lo2:.3f}, {hi2:.3f}] overlap", overlap)
        )
    ok = _report(4, "iid-equivalence", clauses)
    assert ok


# ---------------------------------------------------------------------------
# criterion 5: algebraic round trips at stated tolerances


def test_criterion_5_algebraic_round_trips():
    """phi(w(z)) = z; det roots = phi(lam); h closed vs derivative; dual forms."""
    params = [MpParams(1.0, 0.5), MpParams(2.0, 0.25), MpParams(0.5, 2.0), MpParams(1.0, 145 / 320)]

    worst_rt = 0.0
    for p in params:
        for t in (1e-3, 0.1, 1.0, 10.0):
            z = p.edge_plus * (1.0 + t)
            worst_rt = max(worst_rt, abs(phi_star(w_star(z, p), p) / z - 1.0))

    p = MpParams(1.0, 145 / 320)
    lams = (1.5, 2.0)
    roots = verify.determinant_root_check(p, lams)
    preds = sorted(spike_forward(lam, p).value for lam in lams)
    worst_root = max(abs(r - q) for r, q in zip(roots, preds))
    none_below = verify.determinant_root_check(p, (0.5 * p.spike_threshold,))

    worst_h = 0.0
    for q in params:
        for s in (0.1, 1.0, 5.0):
            rho = q.edge_plus * (1.0 + s)
            w = phi_inverse(rho, q)
            eps = 1e-6 * w
            dphi = (phi_star(w + eps, q) - phi_star(w - eps, q)) / (2.0 * eps)
            h_deriv = dphi * (w + q.sigma2) / phi_star(w, q)
            worst_h = max(worst_h, abs(h_star(rho, q) - h_deriv))

    worst_dual = 0.0
    for m, l in ((160, 16), (32, 4), (7, 3)):
        for theta in (-2.1, 0.0, 0.7):
            direct = block_hankel(steering_vector(m, theta), l)
            worst_dual = max(worst_dual, float(np.max(np.abs(
                smoothed_steering(theta, m, l) - direct
            ))))

    rng = np.random.default_rng(5)
    sc = ArrayScenario(
        m=160, n=20, l=16, doas=(0.0, math.pi / 320), snr_db=10.0,
        signal_policy="fixed-matrix",
    )
    signal = rng.standard_normal((2, 20)) + 1j * rng.standard_normal((2, 20))
    worst_cov = float(np.max(np.abs(
        signal_covariance(sc, signal) - signal_covariance_hadamard(sc, signal)
    )))

    ok = _report(5, "algebraic-round-trips", [
        (f"phi(w(z)) = z to {worst_rt:.1e} (<= 1e-8)", worst_rt <= 1e-8),
        (f"determinant roots = phi(lam) to {worst_root:.1e} (<= 1e-8), "
         f"sub-critical roots absent: {len(none_below) == 0}",
         worst_root <= 1e-8 and len(roots) == 2 and len(none_below) == 0),
        (f"h closed form vs derivative form to {worst_h:.1e} (<= 1e-6)", worst_h <= 1e-6),
        (f"smoothed-steering dual construction to {worst_dual:.1e} (<= 1e-12)",
         worst_dual <= 1e-12),
        (f"Hadamard vs Kronecker covariance to {worst_cov:.1e} (<= 1e-10)", worst_cov <= 1e-10),
    ])
    assert ok


# ---------------------------------------------------------------------------
# criterion 6: estimator ordering at figure level


def _mean_mse(table, value, estimator):
    rows = [r for r in table.rows if r.sweep_value == value and r.estimator == estimator]
    return float(np.mean([r.mse for r in rows]))


def test_criterion_6_estimator_ordering():
    """Closely: gmusic-ss <= music-ss <= plain gmusic above threshold+5 dB;
    widely: the SS pair agrees within 1 dB; L=128 degrades vs L=16."""
    t0 = time.perf_counter()
    m = 160
    close = ArrayScenario(m=m, n=20, l=16, doas=(0.0, math.pi / (2 * m)), snr_db=31.0, seed=1)
    # sweep starts above the tabulated L=16 resolution threshold (25.31 dB) + 5
    close_vals = (31.0, 34.0, 37.0)
    close_tab = run_plan(ExperimentPlan(
        scenario=close, sweep="snr_db", values=close_vals, trials=400,
        estimators=("gmusic", "music-ss", "gmusic-ss"),
    ), workers=1)
    order_ok, order_txt = True, []
    for v in close_vals:
        gm = _mean_mse(close_tab, v, "gmusic")
        mss = _mean_mse(close_tab, v, "music-ss")
        gss = _mean_mse(close_tab, v, "gmusic-ss")
        order_ok = order_ok and gss <= mss <= gm
        order_txt.append(f"{v:.0f}dB: {10 * math.log10(gss):.1f}/"
                         f"{10 * math.log10(mss):.1f}/{10 * math.log10(gm):.1f}")

    wide = ArrayScenario(m=m, n=20, l=16, doas=(0.0, 5 * 2 * math.pi / m), snr_db=8.0, seed=1)
    wide_vals = (8.0, 11.0, 14.0, 17.0, 20.0, 25.0, 30.0)
    wide_tab = run_plan(ExperimentPlan(
        scenario=wide, sweep="snr_db", values=wide_vals, trials=200,
        estimators=("music-ss", "gmusic-ss"),
    ), workers=1)
    gaps = [abs(10 * math.log10(_mean_mse(wide_tab, v, "music-ss"))
                - 10 * math.log10(_mean_mse(wide_tab, v, "gmusic-ss"))) for v in wide_vals]
    wide_ok = max(gaps) <= 1.0

    heavy_vals = (25.0, 30.0, 35.0)
    mse_16, mse_128 = {}, {}
    for l, store in ((16, mse_16), (128, mse_128)):
        tab = run_plan(ExperimentPlan(
            scenario=ArrayScenario(m=m, n=20, l=l, doas=close.doas, snr_db=25.0, seed=1),
            sweep="snr_db", values=heavy_vals, trials=150, estimators=("gmusic-ss",),
        ), workers=1)
        for v in heavy_vals:
            store[v] = _mean_mse(tab, v, "gmusic-ss")
    degrade_ok = all(mse_128[v] > mse_16[v] for v in heavy_vals)
    degrade_db = [10 * math.log10(mse_128[v] / mse_16[v]) for v in heavy_vals]

    elapsed = time.perf_counter() - t0
    ok = _report(6, "estimator-ordering", [
        ("closely gmusic-ss <= music-ss <= gmusic (MSE dB at "
         + ", ".join(order_txt) + ")", order_ok),
        (f"widely SS pair within 1 dB (max gap {max(gaps):.2f} dB)", wide_ok),
        ("L=128 degrades vs L=16 by "
         + "/".join(f"{d:.0f}" for d in degrade_db) + " dB", degrade_ok),
        (f"runtime {elapsed:.0f}s < 600s", elapsed < 600.0),
    ])
    assert ok


# ---------------------------------------------------------------------------
# criterion 7: consistency trends in M


def test_criterion_7_consistency_trends():
    """Widely: median M|err| strictly decreasing for both SS estimators;
    closely: music-ss stays >= 0.8x while gmusic-ss decreases."""
    t0 = time.perf_counter()
    wide_sizes = ((80, 28, 10), (160, 42, 14), (320, 60, 20))
    wide_meds = {}
    for est in ("music-ss", "gmusic-ss"):
        rows = montecarlo.consistency_sweep(
            wide_sizes, (0.0, 5.0), "beamwidth", 12.0, est, trials=500, seed=7
        )
        wide_meds[est] = [r.median_scaled_error for r in rows]
    wide_ok = all(
        a > b for med in wide_meds.values() for a, b in zip(med, med[1:])
    )

    close_sizes = ((80, 20, 16), (160, 28, 23), (320, 40, 32))
    close_meds = {}
    for est in ("music-ss", "gmusic-ss"):
        rows = montecarlo.consistency_sweep(
            close_sizes, (0.0, 0.25), "beamwidth", 32.0, est, trials=500, seed=7
        )
        close_meds[est] = [r.median_scaled_error for r in rows]
    g = close_meds["gmusic-ss"]
    gdec_ok = all(a > b for a, b in zip(g, g[1:]))
    mss = close_meds["music-ss"]
    ratio = mss[-1] / mss[0]
    floor_ok = ratio >= 0.8

    elapsed = time.perf_counter() - t0
    ok = _report(7, "consistency-trends", [
        ("widely median M|err| strictly decreasing both estimators "
         + str({k: [round(v, 4) for v in m] for k, m in wide_meds.items()}), wide_ok),
        ("closely gmusic-ss decreasing "
         + str([round(v, 4) for v in g]), gdec_ok),
        (f"closely music-ss non-vanishing: endpoint ratio {ratio:.2f} >= 0.8", floor_ok),
        (f"runtime {elapsed:.0f}s < 600s", elapsed < 600.0),
    ])
    assert ok, f"music-ss medians {mss}, gmusic-ss medians {g}"


# ---------------------------------------------------------------------------
# criterion 8: CLI determinism


_C8_CONFIGS = {
    "spectrum": """\
[scenario]
m = 32
n = 12
l = 4
doas = 0, 0.98
snr_db = 15
seed = 3

[spectrum]
grid_points = 128
""",
    "montecarlo": """\
[scenario]
m = 32
n = 8
l = 4
doas = 0, 0.9817477
snr_db = 0
seed = 0

[montecarlo]
sweep = snr_db
values = 5, 15
trials = 4
estimators = music-ss, gmusic-ss
""",
    "septable": """\
[scenario]
m = 20
n = 8
l = 2
doas = 0.3, 1.2
snr_db = 10
seed = 1

[septable]
l_values = 2, 4
draws = 5
""",
    "verify": """\
[verify]
m = 64
n = 16
l = 8
trials = 3
seed = 0
""",
}


def test_criterion_8_cli_determinism(tmp_path, monkeypatch):
    """Every command is byte-identical across reruns and worker counts."""
    monkeypatch.delenv("SMOOTHMUSIC_SEED", raising=False)
    clauses = []
    for command, text in _C8_CONFIGS.items():
        cfg = tmp_path / f"{command}.ini"
        cfg.write_text(text, encoding="utf-8")
        outputs = []
        runs = [[], []] if command != "montecarlo" else [["--workers", "1"], ["--workers", "2"]]
        for i, extra in enumerate(runs):
            out_dir = tmp_path / f"{command}-run{i}"
            code = cli.main(
                [command, "--config", str(cfg), "--out", str(out_dir)] + extra
            )
            assert code == 0, f"{command} run {i} exited {code}"
            outputs.append((out_dir / f"{command}.csv").read_bytes())
        same = outputs[0] == outputs[1]
        label = "workers 1 vs 2" if command == "montecarlo" else "two runs"
        clauses.append((f"{command}: {label} byte-identical", same))
    ok = _report(8, "cli-determinism", clauses)
    assert ok
