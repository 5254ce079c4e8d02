"""Local solution to the right of a strict maximum of u, by Picard iteration.

Right of a maximum r0 (u(r0) = A, u'(r0) = 0) the solution is decreasing
and concave, so only the K-/k- branches of the operator are active and the
equation integrates twice into the fixed-point form

    u = T(u),  T(u)(r) = A - int_{r0}^r W_u(s)^(1/(1+alpha)) ds,
    W_u(s) = s^-m int_{r0}^s (1+alpha)/K- u(t)^p t^m dt,   m = N_k (1+alpha),

with w = -W_u the momentum. Profiles live on a composite Gauss-Legendre grid
whose panels are graded geometrically towards r0, where W^(1/(1+alpha)) has
a Holder endpoint singularity.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import legendre

from .errors import NoContraction, QuadratureFailure
from .model import DEFAULT_CONTROLS, ProblemSpec, SolverControls, validate_spec

__all__ = [
    "PatchGrid",
    "CriticalPatch",
    "weight_exponent",
    "apriori_delta",
    "lipschitz_bound",
    "delta_bound",
    "apply_T",
    "contraction_estimate",
    "solve_patch",
    "ball_profiles",
    "patch_residual",
]

# target for the a-priori Lipschitz constant of T; the proof only needs < 1/2
_CONTRACTION_TARGET = 0.25
_MAX_RETRIES = 10


@functools.lru_cache(maxsize=None)
def _reference_rule(n: int):
    """Gauss-Legendre nodes/weights on [-1, 1] plus cumulative-integration and
    differentiation matrices acting on nodal values."""
    x, wts = legendre.leggauss(n)
    V = legendre.legvander(x, n - 1)
    Vinv = np.linalg.inv(V)
    eye = np.eye(n)
    integ = np.column_stack([legendre.legval(x, legendre.legint(eye[k], lbnd=-1.0)) for k in range(n)])
    deriv = np.column_stack([legendre.legval(x, legendre.legder(eye[k])) for k in range(n)])
    return x, wts, integ @ Vinv, deriv @ Vinv


class PatchGrid:
    """Composite Gauss grid on [0, delta] (offsets from r0)."""

    def __init__(self, delta: float, panels: int = 30, order: int = 16, grading: float = 0.5):
        if delta <= 0.0:
            raise ValueError("delta must be positive")
        self.delta = float(delta)
        self.order = order
        edges = np.concatenate([[0.0], delta * grading ** np.arange(panels - 1, -1, -1.0)])
        self.edges = edges
        self.half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        xr, wr, self._S, self._D = _reference_rule(order)
        self._wref = wr
        self.x = (mid[:, None] + self.half[:, None] * xr[None, :]).ravel()
        self.weights = (self.half[:, None] * wr[None, :]).ravel()

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.half), self.order)

    def cumulative(self, f: np.ndarray) -> np.ndarray:
        """int_0^{x_i} f at every node."""
        F = f.reshape(self.shape)
        local = (F @ self._S.T) * self.half[:, None]
        totals = (F @ self._wref) * self.half
        prefix = np.concatenate([[0.0], np.cumsum(totals)[:-1]])
        return (local + prefix[:, None]).ravel()

    def total(self, f: np.ndarray) -> float:
        return float(self.weights @ f)

    def derivative(self, f: np.ndarray) -> np.ndarray:
        F = f.reshape(self.shape)
        return ((F @ self._D.T) / self.half[:, None]).ravel()


@dataclass
class CriticalPatch:
    r0: float
    A: float
    delta: float
    iterates: int
    final_defect: float
    contraction_ratio: float
    grid: PatchGrid = field(repr=False)
    u: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    dw: np.ndarray = field(repr=False)
    drop: np.ndarray = field(repr=False)
    u_exit: float = 0.0
    w_exit: float = 0.0
    dw_entry: float = 0.0
    dw_exit: float = 0.0
    retries: int = 0

    @property
    def r(self) -> np.ndarray:
        return self.r0 + self.grid.x

    @property
    def r_exit(self) -> float:
        return self.r0 + self.delta

    def samples(self):
        """(r, u, w, dw) including both patch end points."""
        r = np.concatenate([[self.r0], self.r, [self.r_exit]])
        u = np.concatenate([[self.A], self.u, [self.u_exit]])
        w = np.concatenate([[0.0], self.w, [self.w_exit]])
        dw = np.concatenate([[self.dw_entry], self.dw, [self.dw_exit]])
        return r, u, w, dw


def weight_exponent(spec: ProblemSpec) -> float:
    """m = N_k (1+alpha): r^m w is the exact integrating factor of the K-/k- branch."""
    return validate_spec(spec).N_k * (1.0 + spec.alpha)


def apriori_delta(A: float, spec: ProblemSpec, b_outer: float) -> float:
    """Self-map patch width from the a-priori estimate, before any cap.

    The leading factor is nonpositive when (N_k - 1)(1+alpha) + 1 <= 0; the
    estimate then constrains nothing and inf is returned.
    """
    al, p = spec.alpha, spec.p
    N_k = validate_spec(spec).N_k
    one = 1.0 + al
    base = ((N_k - 1.0) * one + 1.0) * spec.K_minus / (b_outer * one)
    if base <= 0.0:
        return math.inf
    return (base ** (1.0 / one) * A ** ((one - p) / one)
            * 2.0 ** ((p - 1.0 - al) / one) * 3.0 ** (-p / one))


def lipschitz_bound(delta: float, A: float, spec: ProblemSpec) -> float:
    """A-priori Lipschitz constant of T on the ball |u - A| <= A/2.

    Minkowski in L^(1+alpha) (alpha >= 0) or the mean value theorem
    (alpha < 0) both give q c^beta (3A/2)^(q-1) delta^(1+beta) / (1+beta)
    with beta = 1/(1+alpha), q = p beta, c = (1+alpha)/K-.
    """
    beta = 1.0 / (1.0 + spec.alpha)
    q = spec.p * beta
    c = (1.0 + spec.alpha) / spec.K_minus
    return q * c ** beta * (1.5 * A) ** (q - 1.0) * delta ** (1.0 + beta) / (1.0 + beta)


def _selfmap_bound(delta: float, A: float, spec: ProblemSpec) -> float:
    """sup |T(u) - A| over the ball."""
    beta = 1.0 / (1.0 + spec.alpha)
    c = (1.0 + spec.alpha) / spec.K_minus
    return (c * (1.5 * A) ** spec.p) ** beta * delta ** (1.0 + beta) / (1.0 + beta)


def delta_bound(A: float, spec: ProblemSpec, b_outer: Optional[float] = None,
                capped: bool = True) -> float:
    """Patch width: the a-priori formula, capped so T is a self-map with
    Lipschitz constant <= 1/4, and below 1 when alpha < 0."""
    if A <= 0.0:
        raise ValueError("A must be positive")
    b_outer = spec.b if b_outer is None else b_outer
    delta = apriori_delta(A, spec, b_outer)
    if not capped:
        return delta
    e = 1.0 + 1.0 / (1.0 + spec.alpha)
    # both bounds are C * delta^e; solve C * delta^e = target
    contraction_cap = (_CONTRACTION_TARGET / lipschitz_bound(1.0, A, spec)) ** (1.0 / e)
    selfmap_cap = (0.5 * A / _selfmap_bound(1.0, A, spec)) ** (1.0 / e)
    delta = min(delta, contraction_cap, selfmap_cap)
    if spec.alpha < 0.0:
        delta = min(delta, 0.5)
    return delta


def _T_full(u: np.ndarray, grid: PatchGrid, r0: float, A: float, spec: ProblemSpec,
            weight: Optional[float]):
    m = weight_exponent(spec) if weight is None else weight
    beta = 1.0 / (1.0 + spec.alpha)
    c = (1.0 + spec.alpha) / spec.K_minus
    t = r0 + grid.x
    with np.errstate(all="ignore"):
        f = c * np.power(u, spec.p) * (t / r0) ** m
    if not np.all(np.isfinite(f)):
        raise QuadratureFailure("non-finite inner integrand")
    scale_out = (r0 / t) ** m
    W = grid.cumulative(f) * scale_out
    np.maximum(W, 0.0, out=W)
    g = W ** beta
    drop = grid.cumulative(g)
    r1 = r0 + grid.delta
    W_exit = max(grid.total(f) * (r0 / r1) ** m, 0.0)
    u_exit = A - grid.total(g)
    return A - drop, W, u_exit, W_exit, drop


def apply_T(u: np.ndarray, grid: PatchGrid, r0: float, A: float, spec: ProblemSpec,
            weight: Optional[float] = None) -> np.ndarray:
    """T(u) at the grid nodes. `weight` overrides the integrating-factor exponent m."""
    return _T_full(np.asarray(u, dtype=float), grid, r0, A, spec, weight)[0]


def contraction_estimate(u: np.ndarray, v: np.ndarray, grid: PatchGrid, r0: float, A: float,
                         spec: ProblemSpec) -> float:
    """||T(u) - T(v)||_inf / ||u - v||_inf over the grid."""
    diff = np.max(np.abs(u - v))
    if diff == 0.0:
        return 0.0
    return float(np.max(np.abs(apply_T(u, grid, r0, A, spec) - apply_T(v, grid, r0, A, spec))) / diff)


def ball_profiles(grid: PatchGrid, A: float, rng: np.random.Generator, count: int,
                  modes: int = 6) -> list[np.ndarray]:
    """Random continuous profiles with u(r0) = A and |u - A| < A/2."""
    s = grid.x / grid.delta
    out = []
    for _ in range(count):
        coef = rng.normal(size=modes)
        shape = sum(cj * np.sin((j + 0.5) * math.pi * s) for j, cj in enumerate(coef))
        amp = rng.uniform(0.05, 0.49) * A / max(np.max(np.abs(shape)), 1e-300)
        out.append(A + amp * shape)
    return out


def _case2_holds(u, w, t, spec) -> bool:
    # u'' <= 0  <=>  u^p + (N-1) k- w / r >= 0  on the decreasing branch
    s = np.power(u, spec.p) + (spec.dimension - 1) * spec.k_minus * w / t
    return bool(np.all(s >= -1e-12 * np.maximum(1.0, np.power(u, spec.p))))


def solve_patch(r0: float, A: float, spec: ProblemSpec,
                controls: SolverControls = DEFAULT_CONTROLS,
                b_outer: Optional[float] = None, delta: Optional[float] = None,
                panels: int = 30, order: int = 16) -> CriticalPatch:
    """Fixed point of T starting from the constant profile A.

    The width is halved (at most ten times) when the iteration stalls,
    leaves the ball, or the converged profile leaves the concave branch.
    """
    if A <= 0.0:
        raise ValueError("A must be positive")
    b_outer = max(spec.b, r0) if b_outer is None else b_outer
    delta = delta_bound(A, spec, b_outer) if delta is None else delta
    # absolute tolerance, floored at the roundoff level of profiles of size A
    tol = max(controls.picard_tol, 64.0 * np.finfo(float).eps * A)
    m = weight_exponent(spec)
    c = (1.0 + spec.alpha) / spec.K_minus
    reason = ""
    for retry in range(_MAX_RETRIES + 1):
        grid = PatchGrid(delta, panels=panels, order=order)
        u = np.full(grid.x.shape, A)
        prev_defect = math.inf
        worst_ratio = 0.0
        converged = False
        for it in range(1, controls.max_picard_iters + 1):
            Tu, W, u_exit, W_exit, drop = _T_full(u, grid, r0, A, spec, None)
            defect = float(np.max(np.abs(Tu - u)))
            u = Tu
            if it > 1 and prev_defect > 0.0:
                worst_ratio = max(worst_ratio, defect / prev_defect)
            if np.max(np.abs(u - A)) > 0.5 * A:
                reason = "iterate left the ball"
                break
            if defect <= tol:
                converged = True
                break
            if it > 2 and defect >= prev_defect:
                reason = f"measured ratio {defect / prev_defect:.3g} >= 1"
                break
            prev_defect = defect
        else:
            reason = "iteration budget exhausted"
        if converged:
            t = r0 + grid.x
            w = -W
            if _case2_holds(u, w, t, spec):
                def dw_fn(r, uu, ww):
                    return -c * uu ** spec.p - m * ww / r

                return CriticalPatch(
                    r0=r0, A=A, delta=delta, iterates=it, final_defect=defect,
                    contraction_ratio=worst_ratio, grid=grid, u=u, w=w,
                    dw=dw_fn(t, u, w), drop=drop, u_exit=u_exit, w_exit=-W_exit,
                    dw_entry=dw_fn(r0, A, 0.0),
                    dw_exit=dw_fn(r0 + delta, u_exit, -W_exit), retries=retry)
            reason = "profile left the concave branch"
        delta *= 0.5
    raise NoContraction(f"patch at r0={r0}, A={A}: {reason}")


def patch_residual(patch: CriticalPatch, spec: ProblemSpec, w_floor: float = 0.0) -> float:
    """Max relative defect of the converged profile in the ODE form.

    u' is taken from spectral differentiation of the nodal u and compared to
    sign(w)|w|^(1/(1+alpha)); w' from differentiating w is compared to the
    concave-branch equation. Nodes with |w| <= w_floor, and the panel that
    touches r0, are skipped.
    """
    grid = patch.grid
    beta = 1.0 / (1.0 + spec.alpha)
    # differentiate the stored drop A - u: u itself carries eps*A roundoff,
    # which the narrow inner panels would amplify
    du_spec = -grid.derivative(patch.drop)
    du_mom = -np.abs(patch.w) ** beta
    dw_spec = grid.derivative(patch.w)
    # the first panel touches r0, where W^(1/(1+alpha)) is not polynomial-like
    mask = (np.abs(patch.w) > w_floor) & (grid.x > grid.edges[1])
    if not np.any(mask):
        return 0.0
    e1 = np.abs(du_spec - du_mom)[mask] / np.maximum(1.0, np.abs(du_mom[mask]))
    e2 = np.abs(dw_spec - patch.dw)[mask] / np.maximum(1.0, np.abs(patch.dw[mask]))
    return float(max(e1.max(), e2.max()))
