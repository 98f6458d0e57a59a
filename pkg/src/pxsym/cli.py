"""Command-line runner: ``pxsym run``, ``pxsym suite`` and ``pxsym emit-plots``.

Exit codes: 0 success, 1 assertion failure, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import time
from pathlib import Path

from .config import ExperimentConfig, load_config, parse_config
from .errors import ConfigError, MissingRun, PxsymError
from .grid import read_csv
from .solvers import angular_deviation

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

SUITE_CONFIG = """\
[experiment]
name = property_suite
seed = 0
output_dir = runs

[suite]
samples = 200
"""


def _run_dir(cfg: ExperimentConfig) -> Path:
    base = cfg.output_dir
    base.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    name = f"{cfg.experiment}_{stamp}_s{cfg.seed}"
    path, k = base / name, 1
    while path.exists():  # never overwrite an earlier run
        path = base / f"{name}-{k}"
        k += 1
    path.mkdir()
    return path


def _execute(cfg: ExperimentConfig) -> int:
    from .pipelines import StageError, run_experiment

    run_dir = _run_dir(cfg)
    try:
        man = run_experiment(cfg, run_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        if isinstance(exc.original, ConfigError):
            print(f"config error: {exc.original}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything unexpected is still a runtime failure, not a crash
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name, ok, detail in man.assertions:
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else ""))
    print(f"run directory: {run_dir}")
    return EXIT_OK if man.passed else EXIT_ASSERT


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.resolution)
        if args.output_dir:
            cfg.sections["experiment"]["output_dir"] = str(Path(args.output_dir).resolve())
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(cfg)


def cmd_suite(args) -> int:
    cfg = parse_config(SUITE_CONFIG, Path.cwd()).with_overrides(args.seed, None)
    if args.samples is not None:
        cfg.sections["suite"]["samples"] = str(args.samples)
    if args.output_dir:
        cfg.sections["experiment"]["output_dir"] = str(Path(args.output_dir).resolve())
    return _execute(cfg)


# ---------------------------------------------------------------------------
# plot data


def _read_manifest(run_dir: Path) -> tuple[configparser.ConfigParser, ExperimentConfig]:
    path = run_dir / "manifest.txt"
    if not path.is_file():
        raise MissingRun(f"no manifest.txt in {run_dir}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(path.read_text())
    echo = {s[len("config."):]: dict(cp[s]) for s in cp.sections() if s.startswith("config.")}
    return cp, ExperimentConfig(echo, run_dir)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def emit_plot_data(run_dir) -> Path:
    """Write plot-ready CSV tables for a finished run into ``<run_dir>/plots``."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingRun(f"run directory {run_dir} does not exist")
    _, cfg = _read_manifest(run_dir)
    out = run_dir / "plots"
    out.mkdir(exist_ok=True)

    trace_rows = []
    if (run_dir / "trace.csv").is_file():
        with open(run_dir / "trace.csv", newline="") as fh:
            trace_rows = list(csv.reader(fh))[1:]
    _write_rows(out / "trace.csv", ["iter", "phi", "residual", "max_point_index"], trace_rows)

    profile, deviation, eig = [], [], []
    if cfg.has("grid") and (run_dir / "solution.csv").is_file():
        grid = cfg.build_grid()
        u = read_csv(run_dir / "solution.csv", grid)
        _, rows = angular_deviation(u, per_shell=True)
        osc = u.osc()
        profile = [(r, lo, mean, hi) for r, lo, mean, hi in rows]
        deviation = [(r, (hi - lo) / osc if osc > 0 else 0.0) for r, lo, _, hi in rows]
        if (run_dir / "phi1.csv").is_file():
            _, rows = angular_deviation(read_csv(run_dir / "phi1.csv", grid), per_shell=True)
            eig = list(rows)
    _write_rows(out / "radial_profile.csv", ["r", "u_min", "u_mean", "u_max"], profile)
    _write_rows(out / "angular_deviation.csv", ["r", "deviation_over_osc"], deviation)
    _write_rows(out / "eigenfunction_profile.csv", ["r", "phi1_min", "phi1_mean", "phi1_max"], eig)
    return out


def cmd_emit(args) -> int:
    try:
        out = emit_plot_data(args.run_dir)
    except MissingRun as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PxsymError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"plot data written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pxsym", description="Variable-exponent symmetry experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    r.add_argument("--resolution", type=int, default=None, help="override grid.resolution")
    r.add_argument("--output-dir", default=None, help="override experiment.output_dir")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run the default property suite")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--resolution", type=int, default=None, help="accepted for symmetry with run; unused")
    s.add_argument("--samples", type=int, default=None)
    s.add_argument("--output-dir", default=None)
    s.set_defaults(func=cmd_suite)

    e = sub.add_parser("emit-plots", help="write plot-ready CSV files for a finished run")
    e.add_argument("run_dir")
    e.set_defaults(func=cmd_emit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
