#!/usr/bin/env python3
"""Measured contraction ratio of the patch map against the patch width.

For each width the ratio is the worst over random profile pairs in the ball
|u - A| <= A/2; the row marked * is the width chosen by delta_bound.
"""

import argparse

import numpy as np

from annulus_shooter.critical_patch import PatchGrid, ball_profiles, contraction_estimate, delta_bound
from annulus_shooter.model import ProblemSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--A", type=float, default=1.0)
    ap.add_argument("--pairs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = ProblemSpec.symmetric(alpha=args.alpha, p=args.p)
    rng = np.random.default_rng(args.seed)
    chosen = delta_bound(args.A, spec)
    widths = sorted({chosen, *(chosen * 2.0 ** k for k in range(-3, 5))})
    for d in widths:
        grid = PatchGrid(d)
        prof = ball_profiles(grid, args.A, rng, 2 * args.pairs)
        ratio = max(contraction_estimate(prof[2 * i], prof[2 * i + 1], grid, 1.0, args.A, spec)
                    for i in range(args.pairs))
        mark = "*" if d == chosen else " "
        print(f"{mark} delta {d:10.4e}  ratio {ratio:8.4f}")


if __name__ == "__main__":
    main()
