#!/usr/bin/env python3
"""Run the benchmark grid (simulate, fit, evaluate) for all three baselines.

Full-scale settings take hours; trim --conditions/--reps for a desk run.
Set DPMSHRINK_WORKERS to parallelize cells across processes.
"""

import argparse
import sys

from dpmshrink.cli import main as cli_main

DEFAULT_CONDITIONS = ";".join(
    [
        "100,100,4",
        "100,200,4",
        "200,10,4",
        "200,50,4",
        "200,100,4",
        "200,200,4",
        "200,300,4",
        "200,50,10",
        "200,100,10",
        "200,200,10",
        "400,50,4",
        "400,100,4",
        "400,200,4",
        "400,50,10",
        "400,100,10",
    ]
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--conditions", default=DEFAULT_CONDITIONS)
    ap.add_argument("--baselines", default="hs,ng,n")
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--burn-in", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="table1.csv")
    ap.add_argument("--max-minutes", type=float, default=None)
    args = ap.parse_args()

    cli_args = [
        "reproduce-table1",
        "--conditions", args.conditions,
        "--baselines", args.baselines,
        "--reps", str(args.reps),
        "--iterations", str(args.iterations),
        "--burn-in", str(args.burn_in),
        "--seed", str(args.seed),
        "--out", args.out,
    ]
    if args.max_minutes is not None:
        cli_args += ["--max-minutes", str(args.max_minutes)]
    return cli_main(cli_args)


if __name__ == "__main__":
    sys.exit(main())
