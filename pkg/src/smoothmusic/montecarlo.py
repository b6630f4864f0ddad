"""Monte Carlo experiment harness for the smoothed-subspace estimators.

Plans sweep one scenario parameter (snr_db, l, or m) and, per sweep point,
run many independent noise realizations of each requested estimator.  The
output is a table of per-source mean squared errors with explicit failure
accounting, plus the conditional (deterministic-signal) Cramer-Rao bound as
a reference curve.

Determinism contract: every random quantity is derived from the master seed
through named numpy SeedSequence streams keyed by (purpose, sweep point,
trial), so a plan produces bitwise-identical tables no matter how trials
are scheduled across worker processes.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import subspace
from .array_model import (
    ArrayScenario,
    SmoothedMatrix,
    block_hankel,
    draw_signal_matrix,
    steering_derivative,
    steering_matrix,
)

__all__ = [
    "ESTIMATORS",
    "ConsistencyRow",
    "ExperimentPlan",
    "MseRow",
    "MseTable",
    "Table1Row",
    "consistency_sweep",
    "crb",
    "point_scenario",
    "run_plan",
    "table1",
]

ESTIMATORS = ("music", "gmusic", "music-ss", "gmusic-ss")
SWEEPS = ("snr_db", "l", "m")
DOA_MODES = ("intervals", "window")

# seed-stream tags: 1 = signal draws, 2 = per-trial noise
_STREAM_SIGNAL = 1
_STREAM_NOISE = 2


def _smoothing_factor(estimator: str, l: int) -> int:
    """Smoothing factor used by an estimator (the unsmoothed pair uses l=1)."""
    return l if estimator in ("music-ss", "gmusic-ss") else 1


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep experiment: scenario template, swept values, trial budget.

    Fields
    ------
    scenario : template; the swept field is replaced per point.
    sweep : "snr_db" | "l" | "m".
    values : swept values, nonempty.
    trials : noise realizations per sweep point, >= 1.
    estimators : subset of ESTIMATORS, order preserved in the output table.
    seed : master seed; None falls back to scenario.seed.
    doa_mode : "intervals" confines the search to disjoint windows around
        the true DoAs (the estimators the consistency theory defines);
        "window" scans the whole circle for the k deepest minima.
    include_failures : fold wild-estimate trials into the MSE instead of
        only the failure count.
    fresh_signal : redraw the source matrix every trial instead of holding
        one realization fixed across the sweep.
    strict_separation : raise-and-count trials whose top eigenvalues are
        not separated from the bulk (G-MUSIC variants only).
    """

    scenario: ArrayScenario
    sweep: str
    values: tuple
    trials: int
    estimators: tuple = ESTIMATORS
    seed: Optional[int] = None
    doa_mode: str = "intervals"
    include_failures: bool = False
    fresh_signal: bool = False
    strict_separation: bool = False

    def __post_init__(self) -> None:
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if self.sweep == "snr_db":
            values = tuple(float(v) for v in self.values)
        else:
            values = tuple(int(v) for v in self.values)
            if any(v != w for v, w in zip(values, self.values)):
                raise ValueError(f"{self.sweep} sweep values must be integers")
        object.__setattr__(self, "values", values)
        if not values:
            raise ValueError("sweep values must be nonempty")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        estimators = tuple(dict.fromkeys(self.estimators))
        object.__setattr__(self, "estimators", estimators)
        if not estimators:
            raise ValueError("need at least one estimator")
        unknown = [e for e in estimators if e not in ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators {unknown}; choose from {ESTIMATORS}")
        if self.scenario.k == 0:
            raise ValueError("MSE experiments need at least one source")
        if self.doa_mode not in DOA_MODES:
            raise ValueError(f"doa_mode must be one of {DOA_MODES}, got {self.doa_mode!r}")
        if self.fresh_signal and self.scenario.signal_policy == "fixed-matrix":
            raise ValueError("fresh_signal needs a drawing signal policy")
        if self.seed is not None and self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")
        for v in values:
            point_scenario(self, v)  # fail fast on invalid sweep points

    @property
    def master_seed(self) -> int:
        return self.scenario.seed if self.seed is None else self.seed


def point_scenario(plan: ExperimentPlan, value) -> ArrayScenario:
    """Scenario at one sweep point (the swept field replaced by value)."""
    field = {"snr_db": "snr_db", "l": "l", "m": "m"}[plan.sweep]
    return dataclasses.replace(plan.scenario, **{field: value})


class MseRow(NamedTuple):
    """MSE of one estimator for one source at one sweep point.

    trials is the full per-point budget; failures counts the trials that
    produced no usable estimate (under-resolved / not separated) or a wild
    one (error beyond half the source spacing).  mse averages the
    non-failed trials unless the plan folds failures in; it is NaN when
    nothing could be averaged.  crb is the per-source Cramer-Rao bound.
    """

    sweep_value: float
    estimator: str
    source_index: int
    trials: int
    failures: int
    mse: float
    crb: float


@dataclass(frozen=True)
class MseTable:
    """run_plan output: rows ordered by (sweep point, estimator, source)."""

    sweep: str
    rows: tuple

    def row(self, sweep_value, estimator: str, source_index: int = 0) -> MseRow:
        for r in self.rows:
            if (
                r.sweep_value == sweep_value
                and r.estimator == estimator
                and r.source_index == source_index
            ):
                return r
        raise KeyError(f"no row for ({sweep_value}, {estimator}, {source_index})")


def _matched_errors(theta_hat: np.ndarray, doas: Sequence[float]) -> np.ndarray:
    """Signed estimate errors after nearest assignment to the true DoAs."""
    truth = np.asarray(doas, dtype=float)
    cost = np.abs(theta_hat[:, None] - truth[None, :])
    rows, cols = linear_sum_assignment(cost)
    errors = np.empty(truth.size)
    errors[cols] = theta_hat[rows] - truth[cols]
    return errors


def _failure_threshold(doas: Sequence[float], m: int) -> float:
    """Error beyond this marks a trial as failed: half the minimum source
    spacing, or half a beamwidth for a lone source."""
    ds = sorted(doas)
    if len(ds) >= 2:
        return 0.5 * min(b - a for a, b in zip(ds, ds[1:]))
    return math.pi / m


def _run_trial(task):
    """One noise realization: estimate DoAs with every requested estimator.

    Module-level so process pools can pickle it.  Returns
    (point_index, trial_index, {estimator: signed errors or None}).
    """
    scenario, signal, master, point, trial, estimators, doa_mode, strict = task
    m, n, k = scenario.m, scenario.n, scenario.k
    rng = np.random.default_rng(
        np.random.SeedSequence([master, _STREAM_NOISE, point, trial])
    )
    sigma = math.sqrt(scenario.sigma2)
    noise = sigma * (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / math.sqrt(2.0)
    y = steering_matrix(m, scenario.doas) @ signal + noise

    if doa_mode == "intervals":
        policy = subspace.intervals_around(scenario.doas, m)
    else:
        policy = subspace.SearchWindow()

    eigs = {}
    for lval in sorted({_smoothing_factor(e, scenario.l) for e in estimators}):
        sm = SmoothedMatrix(entries=block_hankel(y, lval), m=m, n=n, l=lval)
        eigs[lval] = subspace.sample_covariance_eig(sm, k)

    out = {}
    for est in estimators:
        eig = eigs[_smoothing_factor(est, scenario.l)]
        if est in ("music", "music-ss"):
            fn = lambda th, e=eig: subspace.traditional_pseudospectrum(e, th)
        else:
            sigma2_hat = subspace.noise_variance_estimate(eig)
            fn = lambda th, e=eig, s2=sigma2_hat: subspace.gmusic_pseudospectrum(
                e, s2, e.c_n, th, strict=strict
            )
        try:
            theta_hat = subspace.find_doas(fn, k, policy, m)
        except (subspace.UnderResolvedError, subspace.NotSeparatedError):
            out[est] = None
            continue
        out[est] = _matched_errors(theta_hat, scenario.doas)
    return point, trial, out


def _map_tasks(tasks, workers: int):
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers == 1 or len(tasks) <= 1:
        return [_run_trial(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial, tasks, chunksize=chunk))


def _plan_signal(plan: ExperimentPlan, signal) -> Optional[np.ndarray]:
    """Resolve the shared source matrix for a plan (None when fresh per trial)."""
    k, n = plan.scenario.k, plan.scenario.n
    if plan.scenario.signal_policy == "fixed-matrix":
        if signal is None:
            raise ValueError("fixed-matrix policy requires an explicit signal")
        s = np.asarray(signal, dtype=complex)
        if s.shape != (k, n):
            raise ValueError(f"signal has shape {s.shape}, expected {(k, n)}")
        return s
    if signal is not None:
        raise ValueError(f"policy {plan.scenario.signal_policy!r} draws its own signal")
    if plan.fresh_signal:
        return None
    rng = np.random.default_rng(np.random.SeedSequence([plan.master_seed, _STREAM_SIGNAL]))
    return draw_signal_matrix(k, n, plan.scenario.signal_policy, rng)


def run_plan(plan: ExperimentPlan, workers: int = 1, signal=None) -> MseTable:
    """Execute a plan and aggregate per-(point, estimator, source) MSE rows.

    workers = 0 uses one process per CPU; any worker count yields the same
    table because trials are keyed by (point, trial) and aggregated in a
    fixed order.  Under the fixed-matrix policy pass the source matrix as
    ``signal``.
    """
    master = plan.master_seed
    s_shared = _plan_signal(plan, signal)
    scens = [point_scenario(plan, v) for v in plan.values]

    tasks = []
    for p, sc in enumerate(scens):
        for t in range(plan.trials):
            if s_shared is None:
                rng = np.random.default_rng(
                    np.random.SeedSequence([master, _STREAM_SIGNAL, p, t])
                )
                s = draw_signal_matrix(sc.k, sc.n, sc.signal_policy, rng)
            else:
                s = s_shared
            tasks.append(
                (sc, s, master, p, t, plan.estimators, plan.doa_mode, plan.strict_separation)
            )

    by_key = {}
    for p, t, out in _map_tasks(tasks, workers):
        by_key[(p, t)] = out

    rows = []
    for p, (value, sc) in enumerate(zip(plan.values, scens)):
        threshold = _failure_threshold(sc.doas, sc.m)
        crb_signal = s_shared
        if crb_signal is None:
            rng = np.random.default_rng(np.random.SeedSequence([master, _STREAM_SIGNAL, p, 0]))
            crb_signal = draw_signal_matrix(sc.k, sc.n, sc.signal_policy, rng)
        crb_point = crb(sc, signal=crb_signal)
        for est in plan.estimators:
            sums = np.zeros(sc.k)
            used = 0
            failures = 0
            for t in range(plan.trials):
                errs = by_key[(p, t)][est]
                if errs is None:
                    failures += 1
                    continue
                if np.max(np.abs(errs)) > threshold:
                    failures += 1
                    if not plan.include_failures:
                        continue
                sums += errs**2
                used += 1
            mse = sums / used if used else np.full(sc.k, np.nan)
            for j in range(sc.k):
                rows.append(
                    MseRow(
                        sweep_value=value,
                        estimator=est,
                        source_index=j,
                        trials=plan.trials,
                        failures=failures,
                        mse=float(mse[j]),
                        crb=float(crb_point[j]),
                    )
                )
    return MseTable(sweep=plan.sweep, rows=tuple(rows))


def crb(scenario: ArrayScenario, signal=None) -> np.ndarray:
    """Conditional (deterministic-signal) Cramer-Rao bound on each DoA.

    CRB = (sigma2 / (2 N)) diag( [Re((D* P_A^perp D) o (S S*/N)^T)]^{-1} )
    with D the steering derivatives and o the elementwise product.  When
    ``signal`` is omitted a drawing policy replays the same source matrix
    that synthesize_snapshots would use for this scenario.
    """
    if scenario.k == 0:
        raise ValueError("CRB needs at least one source")
    k, n, m = scenario.k, scenario.n, scenario.m
    if signal is None:
        if scenario.signal_policy == "fixed-matrix":
            raise ValueError("fixed-matrix policy requires an explicit signal")
        rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
        signal = draw_signal_matrix(k, n, scenario.signal_policy, rng)
    s = np.asarray(signal, dtype=complex)
    if s.shape != (k, n):
        raise ValueError(f"signal has shape {s.shape}, expected {(k, n)}")
    a = steering_matrix(m, scenario.doas)
    d = np.column_stack([steering_derivative(m, t) for t in scenario.doas])
    gram = a.conj().T @ a
    proj = d - a @ np.linalg.solve(gram, a.conj().T @ d)
    h = d.conj().T @ proj
    p_mat = s @ s.conj().T / n
    fim = (2.0 * n / scenario.sigma2) * np.real(h * p_mat.T)
    bound = np.linalg.inv(fim)
    out = np.diagonal(bound).copy()
    if not np.all(np.isfinite(out)) or np.any(out <= 0):
        raise np.linalg.LinAlgError("Fisher information matrix is singular")
    return out


class Table1Row(NamedTuple):
    l: int
    min_snr_db_median: float
    min_snr_db_iqr: float


def table1(
    scenario: ArrayScenario, l_values: Sequence[int], draws: int = 100, seed: Optional[int] = None
) -> list:
    """Minimum separation SNR per smoothing factor, summarized over draws.

    For each l the scenario's source matrix is redrawn ``draws`` times (the
    same draws across all l, so the column effect is isolated) and the
    median and interquartile range of separation_report.min_snr_db are
    reported.
    """
    if scenario.signal_policy == "fixed-matrix":
        raise ValueError("the separation table needs a drawing signal policy")
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    master = scenario.seed if seed is None else seed
    k, n = scenario.k, scenario.n
    signals = []
    for d in range(draws):
        rng = np.random.default_rng(np.random.SeedSequence([master, _STREAM_SIGNAL, k, n, d]))
        signals.append(draw_signal_matrix(k, n, scenario.signal_policy, rng))
    rows = []
    for l in l_values:
        sc = dataclasses.replace(scenario, l=int(l))
        vals = np.array([subspace.separation_report(sc, s).min_snr_db for s in signals])
        q1, q3 = np.percentile(vals, [25.0, 75.0])
        rows.append(Table1Row(int(l), float(np.median(vals)), float(q3 - q1)))
    return rows


class ConsistencyRow(NamedTuple):
    """Median of m * |theta_hat - theta| for one array size."""

    m: int
    n: int
    l: int
    estimator: str
    median_scaled_error: float
    trials: int
    failures: int


def consistency_sweep(
    sizes: Sequence[Sequence[int]],
    doas: Sequence[float],
    spacing: str,
    snr_db: float,
    estimator: str,
    trials: int,
    seed: int,
    signal_policy: str = "random-gaussian-normalized",
    workers: int = 1,
) -> list:
    """Scaled-error trend across increasing array sizes at near-constant c_N.

    sizes is the sizing policy: (m, n, l) triples with m strictly
    increasing and n, l chosen by the caller so that c_N = (m - l + 1)/(n l)
    stays within 10% of the sweep mean (enforced; e.g. l proportional to m
    with n fixed, or l fixed with n proportional to m).  spacing =
    "absolute" uses the doas as given for every m; "beamwidth" interprets
    them in units of 2 pi / m, which holds the spacing-to-beamwidth ratio
    fixed as m grows.  Each size draws its source matrix from a stream
    keyed by (seed, k, n), so sizes sharing n share the signal; the
    per-size statistic is the median of m * |error| pooled over sources
    and non-failed trials.
    """
    triples = [(int(m), int(n), int(l)) for m, n, l in sizes]
    ms = [m for m, _, _ in triples]
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise ValueError("sizes must have strictly increasing m")
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    if spacing not in ("absolute", "beamwidth"):
        raise ValueError(f"spacing must be 'absolute' or 'beamwidth', got {spacing!r}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    scens = []
    for m, n, l in triples:
        if spacing == "absolute":
            th = tuple(float(t) for t in doas)
        else:
            th = tuple(float(t) * 2.0 * math.pi / m for t in doas)
        scens.append(
            ArrayScenario(
                m=m, n=n, l=l, doas=th, snr_db=snr_db, signal_policy=signal_policy, seed=seed
            )
        )
    cs = np.array([sc.c_n for sc in scens])
    target = float(np.mean(cs))
    if np.max(np.abs(cs - target)) > 0.1 * target:
        raise ValueError(
            f"c_N drifts by more than 10% from the sweep mean {target:.4g} "
            f"({cs.min():.4g}..{cs.max():.4g}); adjust the (n, l) schedule"
        )

    k = scens[0].k
    signals = {}
    for sc in scens:
        if sc.n not in signals:
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, _STREAM_SIGNAL, k, sc.n])
            )
            signals[sc.n] = draw_signal_matrix(k, sc.n, signal_policy, rng)

    tasks = []
    for p, sc in enumerate(scens):
        for t in range(trials):
            tasks.append((sc, signals[sc.n], seed, p, t, (estimator,), "intervals", False))
    by_key = {}
    for p, t, out in _map_tasks(tasks, workers):
        by_key[(p, t)] = out

    rows = []
    for p, sc in enumerate(scens):
        pooled = []
        failures = 0
        for t in range(trials):
            errs = by_key[(p, t)][estimator]
            if errs is None:
                failures += 1
                continue
            pooled.extend(sc.m * np.abs(errs))
        med = float(np.median(pooled)) if pooled else math.nan
        rows.append(
            ConsistencyRow(
                m=sc.m,
                n=sc.n,
                l=sc.l,
                estimator=estimator,
                median_scaled_error=med,
                trials=trials,
                failures=failures,
            )
        )
    return rows
