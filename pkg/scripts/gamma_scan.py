#!/usr/bin/env python3
"""Print rho(gamma) over a log grid for one problem (JSON spec file or the
symmetric default)."""

import argparse
import json

import numpy as np

from annulus_shooter.model import ProblemSpec
from annulus_shooter.shooting import scan_gamma


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spec", help="JSON file with the problem fields")
    ap.add_argument("--gamma-min", type=float, default=1e-2)
    ap.add_argument("--gamma-max", type=float, default=1e4)
    ap.add_argument("--points", type=int, default=25)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    spec = ProblemSpec.symmetric()
    if args.spec:
        with open(args.spec) as fh:
            spec = ProblemSpec.from_dict(json.load(fh))
    grid = np.geomspace(args.gamma_min, args.gamma_max, args.points)
    scan = scan_gamma(grid, spec, workers=args.workers)
    print(f"{'gamma':>12} {'tau':>12} {'u(tau)':>12} {'rho':>12}  termination")
    for row in scan.rows:
        cells = [row.gamma, row.tau, row.u_at_tau, row.rho]
        print(" ".join("%12.6g" % c if c is not None else "%12s" % "-" for c in cells),
              "", row.termination.value)
    print(f"HitZero suffix starts at row {scan.suffix_start}")


if __name__ == "__main__":
    main()
