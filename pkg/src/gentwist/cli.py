"""Command line entry point: ``gentwist check <manifold> [options]``."""

from __future__ import annotations

import argparse
import sys

from . import expr as ex
from .integrability import Sampling
from .manifold_file import BUILTINS, ManifoldFileError, load_spec
from .report import SUITES, emit_report, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gentwist", description="Numerical checks for generalized twistor spaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    check = sub.add_parser("check", help="run verification suites on a manifold description")
    check.add_argument("manifold", help=f"path to a description file or a built-in ({', '.join(BUILTINS)})")
    check.add_argument("--suite", action="append", choices=SUITES, help="suite to run (repeatable; default all)")
    check.add_argument("--seed", type=_u64, default=0)
    check.add_argument("--points", type=_positive)
    check.add_argument("--fibers", type=_positive)
    check.add_argument("--probes", type=_positive)
    check.add_argument("--tol", type=float)
    check.add_argument("--json", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    check.add_argument("--against", metavar="MANIFOLD", help="second description for the equivalence suite")
    check.add_argument("--timings", action="store_true", help="include wall-clock times in the JSON report")
    sub.add_parser("fixtures", help="list built-in descriptions")
    return parser


def _sampling(args, manifold) -> Sampling:
    base = dict(manifold.sampling)
    for key in ("points", "fibers", "probes", "tol"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    base.pop("seed", None)
    if base.get("tol", 1.0) <= 0:
        raise ManifoldFileError("tolerance must be positive")
    return Sampling(seed=args.seed, **base)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_CONFIG if exit_.code else EXIT_OK
    if args.command == "fixtures":
        print("\n".join(BUILTINS))
        return EXIT_OK
    try:
        manifold = load_spec(args.manifold)
        against = load_spec(args.against) if args.against else None
        sampling = _sampling(args, manifold)
        sampling.workers()
        report = run_suite(manifold, args.suite or list(SUITES), sampling, against)
    except (ManifoldFileError, ex.ExprError, ValueError) as err:
        print(f"gentwist: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.json == "-":
            emit_report(report, "json", timings=args.timings)
        else:
            emit_report(report, "text")
            if args.json:
                emit_report(report, "json", args.json, args.timings)
    except OSError as err:
        print(f"gentwist: error: cannot write report: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if report.ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
