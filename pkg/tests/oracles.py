"""Independent reference computations, built only on scipy.

Nothing here imports the solver's numerics: the references integrate the
classical second-order form (or the momentum form written out afresh) with
scipy's DOP853 at tight tolerances.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import beta as beta_fn


def laplacian_shot(gamma, N=3, p=3.0, a=1.0, r_end=200.0, rtol=1e-13, atol=1e-15):
    """u'' + (N-1)/r u' + |u|^(p-1) u = 0, u(a) = 0, u'(a) = gamma; stops at the zero after the max."""

    def rhs(r, y):
        u, du = y
        return [du, -math.copysign(abs(u) ** p, u) - (N - 1) * du / r]

    def hit(r, y):
        return y[0] if r > a + 1e-9 else 1.0

    hit.terminal = True
    hit.direction = -1
    sol = solve_ivp(rhs, (a, r_end), [0.0, gamma], method="DOP853", rtol=rtol, atol=atol,
                    events=hit, dense_output=True)
    rho = sol.t_events[0][0] if len(sol.t_events[0]) else None
    return sol, rho


def laplacian_gamma_star(N=3, p=3.0, a=1.0, b=2.0, bracket=(1.0, 1000.0)):
    def mismatch(g):
        rho = laplacian_shot(g, N, p, a)[1]
        return math.inf if rho is None else rho - b

    return brentq(mismatch, *bracket, xtol=1e-14, rtol=1e-15)


def cp_beta(p, alpha):
    """c_p through the Beta function: t^(p+1) = s turns the integral into B(1/(p+1), 1-1/(alpha+2))/(p+1)."""
    return beta_fn(1.0 / (p + 1.0), 1.0 - 1.0 / (alpha + 2.0)) / (p + 1.0)


def _g(x, plus, minus):
    return plus * x if x >= 0 else minus * x


def momentum_reference(spec, r0, A, r_end, eps=1e-7, rtol=1e-13, atol=1e-16):
    """Solution of the full radial equation in momentum form started at a strict
    maximum (u(r0) = A, u'(r0) = 0), integrated by DOP853 from r0 + eps.

    The first eps is bridged with the leading terms of the expansion at the maximum:
    w ~ w'(r0) s and u ~ A - |w'(r0)|^(1/(1+alpha)) s^(1+1/(1+alpha)) / (1+1/(1+alpha)).
    """
    al, p, N = spec.alpha, spec.p, spec.dimension
    w0p = -(1.0 + al) * A ** p / spec.K_minus
    beta = 1.0 / (1.0 + al)
    u_eps = A - abs(w0p) ** beta * eps ** (1.0 + beta) / (1.0 + beta)
    w_eps = w0p * eps

    def rhs(r, y):
        u, w = y
        du = math.copysign(abs(w) ** beta, w)
        s = -(1.0 + al) * (max(u, 0.0) ** p + (N - 1) * _g(w, spec.k_plus, spec.k_minus) / r)
        dw = s / spec.K_plus if s >= 0 else s / spec.K_minus
        return [du, dw]

    return solve_ivp(rhs, (r0 + eps, r_end), [u_eps, w_eps], method="DOP853", rtol=rtol,
                     atol=atol, dense_output=True)
