"""Command-line entry point: ``ppp-coverage {run,validate,oracle} CONFIG``."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .experiment import ENGINES, emit, load_config, run_sweep
from .model import ConfigError
from .zf import ks_suite

EXIT_OK, EXIT_INVALID, EXIT_ENGINE = 0, 1, 2


def _engines(text: str) -> tuple:
    names = tuple(e.strip() for e in text.split(",") if e.strip())
    bad = [e for e in names if e not in ENGINES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"engines must be a comma list from {', '.join(ENGINES)}")
    return names


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors; exit code 2 is reserved for engine failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ppp-coverage",
        description="Coverage of ZF downlink cellular networks with hardware impairments.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("run", "run a sweep and write the coverage curve"),
                           ("validate", "parse and validate a config without running it"),
                           ("oracle", "KS tests of channel-level ZF powers against their Gamma laws")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="TOML config file")
        p.add_argument("--trials", type=_positive_int, help="override Monte Carlo trial count")
        p.add_argument("--seed", type=int, help="override the RNG seed")
        if name == "run":
            p.add_argument("--engines", type=_engines,
                           help=f"comma-separated subset of {','.join(ENGINES)}")
            p.add_argument("--out", help="output path (default: stdout)")
            p.add_argument("--format", choices=("csv", "json"), default="csv")
            p.add_argument("--workers", type=_positive_int, help="worker processes for Monte Carlo")
            p.add_argument("--timing", action="store_true",
                           help="include wall time in JSON metadata (breaks byte stability)")
    return parser


def _spec(args):
    spec = load_config(args.config)
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "engines", None):
        changes["engines"] = args.engines
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    return dataclasses.replace(spec, **changes) if changes else spec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "validate":
        print(f"ok: {spec.variable} sweep over {len(spec.values)} values, "
              f"engines {','.join(spec.engines)}, M={spec.base.m_antennas} K={spec.base.k_users}")
        return EXIT_OK

    if args.command == "oracle":
        cfg = spec.base
        results = ks_suite([(cfg.m_antennas, cfg.k_users)],
                           n=args.trials or 100_000, seed=spec.seed)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_ENGINE

    curve = run_sweep(spec)
    text = emit(curve, args.format, args.out, include_timing=args.timing)
    if args.out is None:
        sys.stdout.write(text)
    for row in curve.rows:
        if row.error:
            print(f"row {spec.variable}={row.sweep_value:g} failed: {row.error}", file=sys.stderr)
        elif row.bound_ok is False:
            print(f"row {spec.variable}={row.sweep_value:g}: analytic bound below MC - CI",
                  file=sys.stderr)
    return EXIT_ENGINE if curve.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
