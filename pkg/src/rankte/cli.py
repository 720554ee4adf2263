"""Command-line interface: ``rankte {analyze,simulate,experiment,sweep}``.

Settings come from an optional ``--config`` file of ``key = value`` lines
and are overridden by explicit flags.  Exit status is 0 on success, 2 for
configuration or input errors and 3 for failures while running.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import (
    ConfigError,
    EmbeddingRangeError,
    EmptyInputError,
    InvalidSpecError,
    InvalidValueError,
)
from .harness import (
    SYSTEMS,
    MonteCarloResult,
    RejectionTable,
    _derived_seed,
    analyze_all_pairs,
    config_from_mapping,
    emit_outputs,
    format_rejection_table,
    load_data,
    parse_config_file,
    run_coupling_sweep,
    run_monte_carlo,
)
from .simulators import add_stochastic_trend, detrend, write_dataset

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# Errors attributable to the user's configuration or input data.
_CONFIG_ERRORS = (
    ConfigError,
    InvalidSpecError,
    InvalidValueError,
    EmptyInputError,
    EmbeddingRangeError,
    FileNotFoundError,
)

# (flag, config key, type, help)
_COMMON_FLAGS = [
    ("--seed", "seed", int, "master seed (default 0)"),
    ("--out", "out", str, "output path (file for simulate, directory otherwise)"),
    ("--measures", "measures", str, "comma-separated subset of PTERV,PSTE,PTE"),
    ("--tests", "tests", str, "comma-separated subset of surrogate,gaussian,gamma1,gamma2"),
    ("--m", "m", int, "embedding dimension (default 2)"),
    ("--tau", "tau", int, "delay (default 1)"),
    ("--T", "T", int, "future horizon (default 1)"),
    ("--k", "k", int, "nearest neighbours for PTE (default 5)"),
    ("--M", "M", int, "number of surrogates (default 100)"),
    ("--alpha", "alpha", float, "FDR level (default 0.05)"),
    ("--realizations", "realizations", int, "Monte Carlo realizations R (default 1)"),
    ("--n-jobs", "n_jobs", int, "worker processes for realizations (default 1)"),
    ("--pairs", "pairs", str, "restrict to 0-based ordered pairs, e.g. 0-1,2-1"),
    ("--detrend", "detrend", str, "none, polynomial or moving_average"),
    ("--detrend-order", "detrend_order", int, "polynomial degree or moving-average width"),
    ("--trend", "trend", float, "add smoothed random-walk trends with this step-SD multiplier"),
    ("--trend-smoothing", "trend_smoothing", int, "moving-average width of the trend (default 100)"),
]

_SYSTEM_FLAGS = [
    ("--system", "system", str, f"generator: {', '.join(sorted(SYSTEMS))}"),
    ("--K", "K", int, "Henon: number of maps"),
    ("--C", "C", float, "coupling strength"),
    ("--N", "N", int, "series length"),
    ("--a", "a", float, "linear system: Z -> X coefficient"),
    ("--b", "b", float, "linear system: Z -> Y coefficient"),
    ("--c", "c", float, "linear system: X -> Y coefficient"),
    ("--d", "d", float, "linear system: Z autoregression"),
    ("--transient", "transient", str, "discarded transient (iterates, samples or time units)"),
    ("--dt", "dt", float, "Lorenz sampling time"),
]


def _add_flags(p: argparse.ArgumentParser, flags):
    for flag, key, typ, text in flags:
        p.add_argument(flag, dest=key, type=typ, default=None, help=text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankte",
        description="Direct causality tests with rank-vector and nearest-neighbour transfer entropies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text, system=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
        p.add_argument("--published-offsets", dest="published_offsets", action="store_const", const="true",
                       default=None, help="use the published constants in the CMI bias")
        _add_flags(p, _COMMON_FLAGS)
        if system:
            _add_flags(p, _SYSTEM_FLAGS)
        return p

    p = command("analyze", "Test all ordered pairs of a CSV dataset.", system=False)
    p.add_argument("--input", dest="input", type=str, default=None, help="CSV file with a header row")

    command("simulate", "Generate a benchmark dataset (CSV plus JSON sidecar).")

    p = command("experiment", "Monte Carlo rejection counts on a generated system.")
    p.add_argument("--resume", action="store_true", help="reuse realizations already in --out")
    p.add_argument("--compare-detrended", action="store_true",
                   help="also run with the configured detrending and print both blocks "
                        "(drifting series vs after detrending)")

    p = command("sweep", "Repeat the experiment over a parameter grid.")
    p.add_argument("--param", default="C", help="system parameter to vary, or P for the "
                                                "moving-average detrending width")
    p.add_argument("--values", required=False, default=None, help="comma-separated grid values")
    return parser


_NON_CONFIG = {"command", "config", "verbose", "resume", "compare_detrended", "param", "values"}


def _mapping(args: argparse.Namespace) -> dict:
    mapping = parse_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key not in _NON_CONFIG and value is not None:
            mapping[key] = value
    return mapping


# --- subcommands -----------------------------------------------------------------


def _cmd_analyze(args, out) -> int:
    mapping = _mapping(args)
    cfg = config_from_mapping(mapping)
    if cfg.csv_path is None:
        raise ConfigError("analyze needs --input (or 'input = ...' in the config file)")
    data = load_data(cfg)
    results = analyze_all_pairs(data, cfg)
    records = [r.record() for r in results]
    for rec in records:
        ps = " ".join(
            f"p_{t}={rec['p_' + t]:.4g}" for t in cfg.tests if rec.get("p_" + t) is not None
        )
        flags = ",".join(t for t, v in rec["rejected"].items() if v) or "-"
        out.write(f"{rec['pair']:<12} {rec['measure']:<6} I={rec['statistic']:.6f} {ps} rejected={flags}\n")
    if cfg.outdir:
        record = {"realization": 0, "data_seed": None, "labels": list(data.labels),
                  "edges": [], "results": records}
        table = RejectionTable.from_records([record], cfg)
        paths = emit_outputs(MonteCarloResult(cfg, table, [record]), cfg.outdir)
        out.write(f"wrote {paths['table']}\n")
    return EXIT_OK


def _cmd_simulate(args, out) -> int:
    cfg = config_from_mapping(_mapping(args))
    if cfg.system is None:
        raise ConfigError("simulate needs --system")
    if cfg.outdir is None:
        raise ConfigError("simulate needs --out <file.csv>")
    sim = SYSTEMS[cfg.system][1](cfg.system_spec(), cfg.seed)
    data = sim.data
    if cfg.trend is not None:
        data = add_stochastic_trend(data, cfg.trend, _derived_seed(cfg.seed, 0, 0))
    data = detrend(data, cfg.detrend, cfg.detrend_order)
    csv_path, side = write_dataset(dataclasses.replace(sim, data=data), cfg.outdir)
    out.write(f"wrote {csv_path} and {side}\n")
    return EXIT_OK


def _cmd_experiment(args, out) -> int:
    cfg = config_from_mapping(_mapping(args))
    if cfg.system is None:
        raise ConfigError("experiment needs --system")
    if not args.compare_detrended:
        res = run_monte_carlo(cfg, resume=args.resume)
        out.write(format_rejection_table({cfg.system: res.table}))
        return EXIT_OK
    if cfg.detrend == "none":
        raise ConfigError("--compare-detrended needs --detrend and --detrend-order")
    blocks = {}
    for title, sub, variant in (
        ("time series with slow drifts", "drift", dataclasses.replace(cfg, detrend="none", detrend_order=0)),
        ("after detrending", "detrended", cfg),
    ):
        outdir = None if cfg.outdir is None else str(Path(cfg.outdir) / sub)
        blocks[title] = run_monte_carlo(dataclasses.replace(variant, outdir=outdir),
                                        resume=args.resume).table
    text = format_rejection_table(blocks)
    out.write(text)
    if cfg.outdir:
        (Path(cfg.outdir) / "table.txt").write_text(text)
    return EXIT_OK


def _cmd_sweep(args, out) -> int:
    cfg = config_from_mapping(_mapping(args))
    if cfg.system is None:
        raise ConfigError("sweep needs --system")
    if not args.values:
        raise ConfigError("sweep needs --values, e.g. --values 0,0.1,0.2")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values: {exc}") from exc
    if args.param == "P":
        values = [int(v) for v in values]
    rows = run_coupling_sweep(cfg, values, args.param)
    buf = io.StringIO()
    for row in rows:
        buf.write(json.dumps(row, sort_keys=True) + "\n")
    out.write(buf.getvalue())
    return EXIT_OK


_COMMANDS = {
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "experiment": _cmd_experiment,
    "sweep": _cmd_sweep,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                         format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args, out)
    except _CONFIG_ERRORS as exc:
        print(f"rankte: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"rankte: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
