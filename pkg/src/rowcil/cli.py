"""Command line: ``rowcil run|gen|bounds``.

Log verbosity comes from ``ROWCIL_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .data import gen_gaussian_clusters, write_csv
from .errors import RowError
from .experiment import load_config, run
from .metrics import bound_multiplier_replay, bound_multiplier_seq


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.output:
        config.output = args.output
    report = run(config)
    final = report.final_aca()
    print(f"final ACA over {len(final)} seed(s): {100 * final.mean():.2f} +- {100 * final.std():.2f}")
    print(f"results written to {config.output}")
    return 0


def _cmd_gen(args) -> int:
    ds = gen_gaussian_clusters(args.classes, args.dim, args.n_per_class, args.spread, args.seed)
    write_csv(ds, args.out)
    print(f"wrote {len(ds.x_train) + len(ds.x_test)} rows to {args.out}")
    return 0


def _cmd_bounds(args) -> int:
    try:
        pi = [float(v) for v in args.pi.split(",") if v.strip()]
    except ValueError:
        raise RowError(f"--pi must be a comma-separated list of numbers, got {args.pi!r}") from None
    print(f"sequential multiplier: {bound_multiplier_seq(pi):.12g}")
    print(f"replay multiplier:     {bound_multiplier_replay(pi):.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rowcil", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train and evaluate from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="override the config's output path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("gen", help="write a synthetic Gaussian-cluster CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("bounds", help="print the task-weight bound multipliers")
    p.add_argument("--pi", required=True, help="comma-separated task weights summing to 1")
    p.set_defaults(func=_cmd_bounds)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ROWCIL_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
