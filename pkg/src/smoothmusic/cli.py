"""Command-line front end: config files in, CSV tables out.

Four subcommands cover the toolkit's batch workflows::

    smoothmusic spectrum   --config run.ini [--out DIR]
    smoothmusic montecarlo --config run.ini [--workers 0]
    smoothmusic septable   --config run.ini
    smoothmusic verify     --config run.ini

Configs are INI files; every command reads its own section plus (except
``verify``) a ``[scenario]`` section.  Angles are radians by default, with
explicit ``deg``/``rad`` suffixes accepted.  Unknown keys are rejected with
the offending line number.  The random seed resolves as: ``--seed`` flag,
then the ``SMOOTHMUSIC_SEED`` environment variable, then the config value.
CSV goes to stdout, or to ``<command>.csv`` under ``--out``; logs go to
stderr.  Exit status: 0 on success, 2 on configuration errors, 1 on
runtime failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import montecarlo, verify
from .array_model import ArrayScenario, hankelize, synthesize_snapshots
from .rmt import MpParams
from .subspace import (
    NotSeparatedError,
    UnderResolvedError,
    gmusic_weights,
    noise_variance_estimate,
    sample_covariance_eig,
    spectrum_trace,
)

__all__ = ["ConfigError", "main"]

log = logging.getLogger("smoothmusic")

COMMANDS = ("spectrum", "montecarlo", "septable", "verify")
VERBOSITIES = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

# signal policies the CLI can drive (fixed-matrix needs an in-process array)
CLI_POLICIES = ("random-gaussian-normalized", "identity-covariance")


class ConfigError(Exception):
    """A configuration problem: bad file, unknown key, invalid value."""


# ---------------------------------------------------------------------------
# value parsers


def _parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}")


def _parse_float(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}")


def _parse_angle(text: str) -> float:
    """An angle in radians; 'deg'/'rad' suffixes are accepted."""
    t = text.strip().lower()
    scale = 1.0
    if t.endswith("deg"):
        t, scale = t[:-3], math.pi / 180.0
    elif t.endswith("rad"):
        t = t[:-3]
    try:
        return float(t) * scale
    except ValueError:
        raise ValueError(f"expected an angle like '0.05', '0.05rad' or '30deg', got {text!r}")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean (true/false), got {text!r}")


def _parse_str(text: str) -> str:
    return text.strip()


def _list_of(parse: Callable) -> Callable:
    def inner(text: str):
        items = [piece.strip() for piece in text.split(",")]
        items = [piece for piece in items if piece]
        if not items:
            raise ValueError("expected a comma-separated list")
        return tuple(parse(piece) for piece in items)

    return inner


@dataclass(frozen=True)
class Key:
    parse: Callable
    required: bool = True
    default: object = None


_SCENARIO_SCHEMA = {
    "m": Key(_parse_int),
    "n": Key(_parse_int),
    "l": Key(_parse_int),
    "doas": Key(_list_of(_parse_angle)),
    "snr_db": Key(_parse_float),
    "signal_policy": Key(_parse_str, required=False, default="random-gaussian-normalized"),
    "seed": Key(_parse_int, required=False, default=0),
}

_OUTPUT_SCHEMA = {
    "out_dir": Key(_parse_str, required=False, default=None),
    "verbosity": Key(_parse_str, required=False, default="info"),
}

SCHEMAS = {
    "spectrum": {
        "scenario": _SCENARIO_SCHEMA,
        "spectrum": {
            "grid_points": Key(_parse_int, required=False, default=1024),
            "lo": Key(_parse_angle, required=False, default=-math.pi),
            "hi": Key(_parse_angle, required=False, default=math.pi),
            "strict_separation": Key(_parse_bool, required=False, default=False),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "montecarlo": {
        "scenario": _SCENARIO_SCHEMA,
        "montecarlo": {
            "sweep": Key(_parse_str),
            "values": Key(_list_of(_parse_float)),
            "trials": Key(_parse_int),
            "estimators": Key(_list_of(_parse_str), required=False, default=montecarlo.ESTIMATORS),
            "doa_mode": Key(_parse_str, required=False, default="intervals"),
            "include_failures": Key(_parse_bool, required=False, default=False),
            "fresh_signal": Key(_parse_bool, required=False, default=False),
            "strict_separation": Key(_parse_bool, required=False, default=False),
            "workers": Key(_parse_int, required=False, default=1),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "septable": {
        "scenario": _SCENARIO_SCHEMA,
        "septable": {
            "l_values": Key(_list_of(_parse_int)),
            "draws": Key(_parse_int, required=False, default=100),
        },
        "output": _OUTPUT_SCHEMA,
    },
    "verify": {
        "verify": {
            "m": Key(_parse_int),
            "n": Key(_parse_int),
            "l": Key(_parse_int),
            "sigma2": Key(_parse_float, required=False, default=1.0),
            "trials": Key(_parse_int, required=False, default=100),
            "seed": Key(_parse_int, required=False, default=0),
        },
        "output": _OUTPUT_SCHEMA,
    },
}

# sections whose keys are all optional may be omitted entirely
_OPTIONAL_SECTIONS = ("spectrum", "output")


def _line_of(lines, section: str, key: Optional[str]) -> Optional[int]:
    """1-based line number of a section header or of a key inside it."""
    in_section = False
    for i, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            if in_section and key is not None:
                return None
            in_section = stripped[1:-1].strip() == section
            if in_section and key is None:
                return i
            continue
        if in_section and key is not None:
            head = stripped.split("=", 1)[0].split(":", 1)[0].strip()
            if head == key:
                return i
    return None


def _where(path: str, lines, section: str, key: Optional[str]) -> str:
    line = _line_of(lines, section, key)
    return f"{path}:{line}" if line is not None else path


def load_config(path: str, command: str) -> dict:
    """Parse and validate one command's config into {section: {key: value}}."""
    schema = SCHEMAS[command]
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
        parser.read_string(raw, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    lines = raw.splitlines()

    for section in parser.sections():
        if section not in schema:
            raise ConfigError(
                f"{_where(path, lines, section, None)}: unknown section [{section}] "
                f"for command {command!r}"
            )
    if parser.defaults():
        key = next(iter(parser.defaults()))
        raise ConfigError(f"{path}: [DEFAULT] section is not supported (found key {key!r})")

    out = {}
    for section, keys in schema.items():
        if section not in parser:
            if section in _OPTIONAL_SECTIONS:
                out[section] = {name: spec.default for name, spec in keys.items()}
                continue
            raise ConfigError(f"{path}: missing required section [{section}]")
        got = parser[section]
        for name in got:
            if name not in keys:
                raise ConfigError(
                    f"{_where(path, lines, section, name)}: unknown key {name!r} in [{section}]"
                )
        values = {}
        for name, spec in keys.items():
            if name in got:
                try:
                    values[name] = spec.parse(got[name])
                except ValueError as exc:
                    raise ConfigError(
                        f"{_where(path, lines, section, name)}: bad value for "
                        f"{name!r} in [{section}]: {exc}"
                    ) from exc
            elif spec.required:
                raise ConfigError(
                    f"{_where(path, lines, section, None)}: missing required key "
                    f"{name!r} in [{section}]"
                )
            else:
                values[name] = spec.default
        out[section] = values
    return out


def _resolve_seed(config_seed: int, flag_seed: Optional[int]) -> int:
    if flag_seed is not None:
        seed = flag_seed
    else:
        env = os.environ.get("SMOOTHMUSIC_SEED")
        if env is not None:
            try:
                seed = int(env)
            except ValueError:
                raise ConfigError(f"SMOOTHMUSIC_SEED must be an integer, got {env!r}")
        else:
            seed = config_seed
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def _build_scenario(cfg: dict, seed: int) -> ArrayScenario:
    sc = cfg["scenario"]
    if sc["signal_policy"] not in CLI_POLICIES:
        raise ConfigError(
            f"signal_policy must be one of {CLI_POLICIES} on the command line, "
            f"got {sc['signal_policy']!r}"
        )
    try:
        return ArrayScenario(
            m=sc["m"],
            n=sc["n"],
            l=sc["l"],
            doas=sc["doas"],
            snr_db=sc["snr_db"],
            signal_policy=sc["signal_policy"],
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [scenario]: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(stream, header, rows) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def _db(value: float) -> float:
    if math.isnan(value):
        return math.nan
    if value <= 0.0:
        return -math.inf
    return 10.0 * math.log10(value)


# ---------------------------------------------------------------------------
# commands (each returns (header, rows))


def cmd_spectrum(cfg: dict, scenario: ArrayScenario):
    spec = cfg["spectrum"]
    grid_points = spec["grid_points"]
    if grid_points < 2:
        raise ConfigError(f"grid_points must be >= 2, got {grid_points}")
    if not spec["hi"] > spec["lo"]:
        raise ConfigError(f"empty spectrum window [{spec['lo']}, {spec['hi']}]")
    snapshots = synthesize_snapshots(scenario)
    eig = sample_covariance_eig(hankelize(snapshots, scenario.l), scenario.k)
    sigma2_hat = noise_variance_estimate(eig)
    if scenario.k and spec["strict_separation"]:
        _, separated = gmusic_weights(eig, sigma2_hat, eig.c_n)
        if not np.all(separated):
            bad = np.flatnonzero(~separated)
            edge = MpParams(sigma2_hat, eig.c_n).edge_plus
            raise NotSeparatedError(bad, eig.eigenvalues[: eig.k], edge)

    grid = np.linspace(spec["lo"], spec["hi"], grid_points)
    trad = spectrum_trace(eig, grid, "traditional")
    gm = spectrum_trace(eig, grid, "g-music", sigma2=sigma2_hat, c=eig.c_n)

    def flags(trace):
        mask = np.zeros(grid.size, dtype=bool)
        for theta, _depth in trace.minima:
            mask[int(np.argmin(np.abs(grid - theta)))] = True
        return mask

    f_t, f_g = flags(trad), flags(gm)
    rows = [
        (grid[i], trad.values[i], gm.values[i], bool(f_t[i]), bool(f_g[i]))
        for i in range(grid.size)
    ]
    header = ("theta_rad", "eta_traditional", "eta_gmusic", "is_minimum_trad", "is_minimum_gmusic")
    return header, rows


def cmd_montecarlo(cfg: dict, scenario: ArrayScenario, workers: Optional[int], strict: Optional[bool]):
    mc = cfg["montecarlo"]
    values = mc["values"]
    if mc["sweep"] in ("l", "m"):
        as_int = tuple(int(v) for v in values)
        if any(i != v for i, v in zip(as_int, values)):
            raise ConfigError(f"{mc['sweep']} sweep values must be integers, got {values}")
        values = as_int
    try:
        plan = montecarlo.ExperimentPlan(
            scenario=scenario,
            sweep=mc["sweep"],
            values=values,
            trials=mc["trials"],
            estimators=mc["estimators"],
            doa_mode=mc["doa_mode"],
            include_failures=mc["include_failures"],
            fresh_signal=mc["fresh_signal"],
            strict_separation=mc["strict_separation"] if strict is None else strict,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [montecarlo]: {exc}") from exc
    n_workers = mc["workers"] if workers is None else workers
    if n_workers < 0:
        raise ConfigError(f"workers must be >= 0, got {n_workers}")
    log.info(
        "montecarlo: sweep %s over %d points, %d trials/point, workers=%d",
        plan.sweep,
        len(plan.values),
        plan.trials,
        n_workers,
    )
    table = montecarlo.run_plan(plan, workers=n_workers)
    rows = [
        (
            r.sweep_value,
            r.estimator,
            r.source_index,
            r.trials,
            r.failures,
            r.mse,
            _db(r.mse),
            r.crb,
            _db(r.crb),
        )
        for r in table.rows
    ]
    header = (
        "sweep_value",
        "estimator",
        "source_index",
        "trials",
        "failures",
        "mse",
        "mse_db",
        "crb",
        "crb_db",
    )
    return header, rows


def cmd_septable(cfg: dict, scenario: ArrayScenario):
    sp = cfg["septable"]
    if scenario.k == 0:
        raise ConfigError("septable needs at least one doa in [scenario]")
    if sp["draws"] < 1:
        raise ConfigError(f"draws must be >= 1, got {sp['draws']}")
    for l in sp["l_values"]:
        try:
            dataclasses.replace(scenario, l=l)
        except ValueError as exc:
            raise ConfigError(f"invalid l value {l}: {exc}") from exc
    log.info("septable: %d smoothing factors, %d draws each", len(sp["l_values"]), sp["draws"])
    rows = montecarlo.table1(scenario, sp["l_values"], draws=sp["draws"])
    header = ("L", "min_snr_db_median", "min_snr_db_iqr")
    return header, [(r.l, r.min_snr_db_median, r.min_snr_db_iqr) for r in rows]


def cmd_verify(cfg: dict, flag_seed: Optional[int]):
    vc = cfg["verify"]
    seed = _resolve_seed(vc["seed"], flag_seed)
    if vc["sigma2"] <= 0:
        raise ConfigError(f"sigma2 must be positive, got {vc['sigma2']}")
    if vc["trials"] < 2:
        raise ConfigError(f"trials must be >= 2, got {vc['trials']}")
    if not 1 <= vc["l"] < vc["m"]:
        raise ConfigError(f"need 1 <= l < m, got l={vc['l']}, m={vc['m']}")
    if vc["n"] < 1:
        raise ConfigError(f"n must be positive, got {vc['n']}")
    log.info(
        "verify: M=%d N=%d L=%d sigma2=%g, %d trials", vc["m"], vc["n"], vc["l"], vc["sigma2"], vc["trials"]
    )
    rows = verify.run_verification_suite(
        vc["m"], vc["n"], vc["l"], vc["sigma2"], trials=vc["trials"], seed=seed
    )
    header = ("check", "m", "n", "l", "statistic", "threshold", "pass")
    return header, [tuple(r) for r in rows]


# ---------------------------------------------------------------------------
# entry point


def _configure_logging(verbosity: str) -> None:
    if verbosity not in VERBOSITIES:
        raise ConfigError(f"verbosity must be one of {sorted(VERBOSITIES)}, got {verbosity!r}")
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        log.addHandler(handler)
        log.propagate = False
    log.setLevel(VERBOSITIES[verbosity])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothmusic",
        description="Spatially smoothed subspace DoA estimation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "spectrum": "evaluate the traditional and corrected pseudo-spectra on a grid",
        "montecarlo": "run an MSE sweep experiment",
        "septable": "tabulate the minimum separation SNR per smoothing factor",
        "verify": "run the random-matrix verification suite",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=descriptions[name])
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", default=None, help="directory for <command>.csv (default: stdout)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--workers",
            type=int,
            default=None,
            help="worker processes for montecarlo (0 = one per CPU)",
        )
        p.add_argument(
            "--strict-separation",
            choices=("true", "false"),
            default=None,
            help="override the strict_separation config key",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    strict = None if args.strict_separation is None else args.strict_separation == "true"
    try:
        cfg = load_config(args.config, args.command)
        _configure_logging(cfg["output"]["verbosity"])
        if args.command == "verify":
            header, rows = cmd_verify(cfg, args.seed)
        else:
            seed = _resolve_seed(cfg["scenario"]["seed"], args.seed)
            scenario = _build_scenario(cfg, seed)
            if args.command == "spectrum":
                header, rows = cmd_spectrum(cfg, scenario)
            elif args.command == "montecarlo":
                header, rows = cmd_montecarlo(cfg, scenario, args.workers, strict)
            else:
                header, rows = cmd_septable(cfg, scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (
        NotSeparatedError,
        UnderResolvedError,
        ValueError,
        RuntimeError,
        np.linalg.LinAlgError,
    ) as exc:
        log.error("%s", exc)
        return 1

    out_dir = args.out if args.out is not None else cfg["output"]["out_dir"]
    if out_dir is None:
        _write_csv(sys.stdout, header, rows)
    else:
        try:
            os.makedirs(out_dir, exist_ok=True)
            path = os.path.join(out_dir, f"{args.command}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                _write_csv(fh, header, rows)
        except OSError as exc:
            log.error("cannot write output: %s", exc)
            return 1
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
