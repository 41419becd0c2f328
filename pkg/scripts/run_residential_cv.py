#!/usr/bin/env python3
"""Real-data protocol: 5-fold CV of all four models on the residential CSV.

Expects the user-supplied building dataset (see docs/residential_layout.md);
the response is log profit and every variable is z-scored per training fold.
The mass-parameter prior uses scale 20 to favor fewer clusters.
"""

import argparse
import sys

from dpmshrink.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", required=True, help="residential-building CSV")
    ap.add_argument("--response", default="profit")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--burn-in", type=int, default=2000)
    ap.add_argument("--out", default="residential_cv.csv")
    args = ap.parse_args()

    return cli_main(
        [
            "cv",
            "--data", args.data,
            "--response", args.response,
            "--log-response",
            "--folds", "5",
            "--baselines", "hs,ng,n,hs-linear",
            "--theta-alpha", "20",
            "--iterations", str(args.iterations),
            "--burn-in", str(args.burn_in),
            "--seed", str(args.seed),
            "--out", args.out,
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
