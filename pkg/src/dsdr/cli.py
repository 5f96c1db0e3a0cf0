"""``dsdr`` command line: run, fit and timing."""

from __future__ import annotations

import argparse
import sys

from .bench import (
    ExperimentConfig,
    RunMode,
    TimingPoint,
    default_grid,
    emit_results,
    fit_directions,
    run_experiment,
    timing_sweep,
    write_directions,
)
from .errors import ConfigError, ParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_pipeline_flags(ap: argparse.ArgumentParser):
    ap.add_argument("--method", choices=["sir", "save", "dr"], default="sir")
    ap.add_argument("--mode", choices=[m.value for m in RunMode], default="global")
    ap.add_argument("--slices", type=_positive_int, default=10, help="number of slices H")
    ap.add_argument("--workers", type=_positive_int, default=5, help="number of shards S")
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--k", type=_positive_int, help="eigenpairs kept per worker")
    g.add_argument("--alpha", type=float, help="cumulative-variance threshold per worker")
    ap.add_argument("--kg", type=_positive_int, help="final number of directions (default: structural dimension)")
    ap.add_argument("--aggregate", choices=["spectrum", "basis"], default="spectrum")
    ap.add_argument("--partition", choices=["homo-equal", "hetero-equal", "hetero-unequal"])
    ap.add_argument("--back-transform", action="store_true",
                    help="approx-hetero: workers also send scatter and the master maps back by the pooled covariance")
    ap.add_argument("--reps", type=_positive_int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    ap.add_argument("--port", type=int, default=0)
    ap.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dsdr", description="Pooled and distributed sufficient dimension reduction.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte-Carlo experiment on a simulated design")
    run.add_argument("--model", type=int, choices=range(1, 9), default=1)
    run.add_argument("--xmode", choices=["standard", "hetero", "dependent"], default="standard")
    run.add_argument("--n", type=_positive_int, default=1000)
    run.add_argument("--p", type=_positive_int, default=10)
    run.add_argument("--sigma", type=float, default=0.5, help="noise scale")
    _add_pipeline_flags(run)

    fit = sub.add_parser("fit", help="estimate directions on an external CSV")
    fit.add_argument("--input", required=True)
    fit.add_argument("--response", default="0", help="response column name or zero-based index")
    fit.add_argument("--standardize", action="store_true")
    fit.add_argument("--directions", help="also write the estimated basis (one row per predictor) to this CSV")
    _add_pipeline_flags(fit)

    tim = sub.add_parser("timing", help="estimation-time sweep over n, p and S")
    tim.add_argument("--grid", default="default",
                     help="'default' or a list like 'global:100000:100:1,exact:100000:100:5'")
    tim.add_argument("--method", choices=["sir", "save", "dr"], default="sir")
    tim.add_argument("--model", type=int, choices=range(1, 9), default=1)
    tim.add_argument("--slices", type=_positive_int, default=10)
    tim.add_argument("--repeats", type=_positive_int, default=3, help="best-of count per point")
    tim.add_argument("--seed", type=int, default=0)
    tim.add_argument("--out", required=True)
    return ap


def parse_grid(text: str) -> list[TimingPoint]:
    if text == "default":
        return default_grid()
    pts = []
    for item in text.split(","):
        try:
            mode, n, p, S = item.strip().split(":")
            pts.append(TimingPoint(RunMode(mode), int(float(n)), int(p), int(S)))
        except ValueError:
            raise ConfigError(f"bad grid point {item!r}; expected mode:n:p:S") from None
    return pts


def _config(args, **extra) -> ExperimentConfig:
    return ExperimentConfig(
        method=args.method, mode=args.mode, H=args.slices, S=args.workers, K=args.kg, K_local=args.k,
        alpha=args.alpha, aggregation=args.aggregate, partition=args.partition,
        back_transform=args.back_transform, reps=args.reps, seed=args.seed, transport=args.transport,
        port=args.port, **extra,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "timing":
            base = ExperimentConfig(method=args.method, model=args.model, H=args.slices, seed=args.seed)
            table = timing_sweep(parse_grid(args.grid), base, repeats=args.repeats)
        elif args.command == "run":
            table = run_experiment(_config(args, model=args.model, xmode=args.xmode, n=args.n, p=args.p,
                                           sigma=args.sigma))
        else:
            response = int(args.response) if args.response.lstrip("-").isdigit() else args.response
            config = _config(args, model=None, input_path=args.input, response=response,
                             standardize=args.standardize)
            table = run_experiment(config)
            if args.directions:
                write_directions(args.directions, *fit_directions(config))
    except (ConfigError, ParseError, OSError) as exc:
        print(f"dsdr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit_results(table, args.out)
    except OSError as exc:
        print(f"dsdr: error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    data = table.data_rows()
    failed = sum(1 for r in data if r["error_flag"])
    if failed:
        print(f"dsdr: {failed} of {len(data)} rows failed", file=sys.stderr)
    if data and failed == len(data):
        return EXIT_ALL_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
