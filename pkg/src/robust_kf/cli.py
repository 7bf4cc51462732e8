"""``robust-kf`` command line entry point."""

from __future__ import annotations

import argparse
import sys

from .plans import BUILTIN_PLANS, CSV_HEADER, PlanError, apply_overrides, load_plan, run_plan


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _nonnegative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robust-kf",
        description="Monte Carlo benchmark of CKF, Huber-CKF and per-channel Huber-CKF.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a plan file or builtin plan")
    run.add_argument("plan", help="plan JSON file, run manifest, or builtin name (see list-plans)")
    run.add_argument("--out", required=True, help="output directory for results.csv and manifest.json")
    run.add_argument("--seed", type=_u64, help="override the master seed of every scenario")
    run.add_argument("--threads", type=_nonnegative, default=0, help="worker cap (0 = auto)")
    run.add_argument("--runs", type=_positive, help="override Monte Carlo runs L")
    run.add_argument("--steps", type=_positive, help="override trajectory length T")

    sub.add_parser("list-plans", help="list builtin plans")

    validate = sub.add_parser("validate", help="check a plan file without running it")
    validate.add_argument("plan")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "list-plans":
        for name, (desc, _) in BUILTIN_PLANS.items():
            print(f"{name}\t{desc}")
        return 0

    try:
        plan = load_plan(args.plan)
        if args.command == "validate":
            print(f"ok: {plan.name} ({len(plan.scenarios)} scenarios)")
            return 0
        plan = apply_overrides(plan, seed=args.seed, runs=args.runs, steps=args.steps)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    def echo(msg):
        print(msg, file=sys.stderr)

    status, rows = run_plan(plan, args.out, threads=args.threads, echo=echo)
    print(",".join(CSV_HEADER))
    for row in rows:
        print(",".join(row))
    return status


if __name__ == "__main__":
    sys.exit(main())
