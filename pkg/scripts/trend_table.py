#!/usr/bin/env python3
"""Large-gamma behaviour of tau, u(tau), rho and u'(rho) on a few fixed problems."""

from annulus_shooter.integrator import integrate
from annulus_shooter.model import ProblemSpec

SPECS = {
    "laplacian N=3 p=3": ProblemSpec.symmetric(),
    "N=2 alpha=1 p=4": ProblemSpec(2, 1.0, 4.0, 0.5, 2.5, 0.8, 1.2, 1.5, 2.0, 1.0, 2.0),
    "N=4 alpha=-0.5 p=2": ProblemSpec(4, -0.5, 2.0, 0.7, 1.6, 0.8, 1.0, 1.2, 1.5, 1.0, 2.0),
    "N=3 alpha=2 p=5.5": ProblemSpec(3, 2.0, 5.5, 0.6, 2.0, 1.0, 0.9, 1.8, 1.4, 1.0, 2.0),
}


def main():
    for name, spec in SPECS.items():
        print(name)
        print(f"  {'gamma':>8} {'tau-a':>12} {'u(tau)':>12} {'rho-a':>12} {'du(rho)':>14}")
        for g in (1.0, 10.0, 100.0, 1000.0, 10000.0):
            out = integrate(g, spec)[1]
            if not out.hit_zero:
                print(f"  {g:8.0f}  {out.termination.value}")
                continue
            print(f"  {g:8.0f} {out.tau - spec.a:12.5e} {out.u_at_tau:12.5e} "
                  f"{out.rho - spec.a:12.5e} {out.du_at_rho:14.6e}")


if __name__ == "__main__":
    main()
