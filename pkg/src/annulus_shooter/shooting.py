"""Outer shooting loop: gamma -> rho(gamma), bracketing and bisection to rho = b.

D = {gamma : rho(gamma) < inf} contains a neighbourhood of +inf and rho
tends to +inf at the left end of its unbounded component, while rho -> a as
gamma -> inf. A log-spaced scan therefore finds a HitZero suffix in which
rho - b changes sign; truncated shots count as rho = +inf.
"""

from __future__ import annotations

import concurrent.futures
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import BracketNotFound, NotConverged, NumericalFailure
from .integrator import ShotOutcome, Termination, Trajectory, integrate
from .model import DEFAULT_CONTROLS, ProblemSpec, SolverControls, validate_spec

__all__ = [
    "Sign",
    "Solution",
    "GammaScan",
    "shoot",
    "scan_gamma",
    "solve_bvp",
    "negative_solution",
    "nodal_solution",
    "boundary_residual",
]


class Sign(enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"


@dataclass
class Solution:
    gamma_star: float
    trajectory: Trajectory
    sign: Sign
    boundary_residual: float
    spec: ProblemSpec
    outcome: ShotOutcome
    brackets_found: int = 1
    iterations: int = 0
    rho_error: float = 0.0
    polished: bool = False
    nodal_radii: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "gamma_star": self.gamma_star,
            "sign": self.sign.value,
            "boundary_residual": self.boundary_residual,
            "rho_error": self.rho_error,
            "brackets_found": self.brackets_found,
            "bisection_iterations": self.iterations,
            "polished": self.polished,
            "nodal_radii": list(self.nodal_radii),
            **self.outcome.as_row(),
        }


@dataclass
class GammaScan:
    rows: list[ShotOutcome]
    suffix_start: int

    @property
    def gammas(self) -> np.ndarray:
        return np.array([row.gamma for row in self.rows])

    @property
    def suffix(self) -> list[ShotOutcome]:
        return self.rows[self.suffix_start:]


def shoot(gamma: float, spec: ProblemSpec,
          controls: SolverControls = DEFAULT_CONTROLS) -> ShotOutcome:
    return integrate(gamma, spec, controls)[1]


def _safe_shoot(args) -> ShotOutcome:
    gamma, spec, controls = args
    try:
        return shoot(gamma, spec, controls)
    except NumericalFailure:
        return ShotOutcome(gamma, None, None, None, None, Termination.STEP_FAILURE)


def _hit_suffix_start(rows: Sequence[ShotOutcome]) -> int:
    start = len(rows)
    while start > 0 and rows[start - 1].hit_zero:
        start -= 1
    return start


def scan_gamma(grid: Sequence[float], spec: ProblemSpec,
               controls: SolverControls = DEFAULT_CONTROLS,
               workers: int = 1) -> GammaScan:
    """One ShotOutcome per gamma; failures are recorded per row, never raised."""
    grid = [float(g) for g in grid]
    if not grid or any(g <= 0.0 for g in grid):
        raise ValueError("grid must be nonempty and positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    jobs = [(g, spec, controls) for g in grid]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_safe_shoot, jobs))
    else:
        rows = [_safe_shoot(job) for job in jobs]
    return GammaScan(rows, _hit_suffix_start(rows))


def boundary_residual(traj: Trajectory, outcome: ShotOutcome, b: float) -> float:
    """|u(b)| for a shot that ends at rho; linear extension past rho."""
    if outcome.rho is None:
        return abs(traj.evaluate(b)[0])
    if b <= outcome.rho:
        return abs(traj.evaluate(b)[0])
    return abs(outcome.du_at_rho) * (b - outcome.rho)


def _mismatch(rho: Optional[float], b: float) -> float:
    return math.inf if rho is None else rho - b


def _find_brackets(gammas, mismatches, start):
    """Adjacent index pairs in [start-1, end) with a sign change of rho - b."""
    out = []
    for i in range(max(start - 1, 0), len(gammas) - 1):
        lo, hi = mismatches[i], mismatches[i + 1]
        if math.isnan(lo) or math.isnan(hi):
            continue
        if lo == 0.0 or hi == 0.0 or (lo > 0.0) != (hi > 0.0):
            out.append(i)
    return out


def _bisect(fn: Callable[[float], tuple], lo: float, hi: float, m_lo: float,
            controls: SolverControls):
    """Bisection on gamma; fn returns (mismatch, payload).

    Returns the best evaluation, the final bracket and the iteration count.
    """
    best = None
    it = 0
    for it in range(1, controls.max_bisect_iters + 1):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        m_mid, payload = fn(mid)
        if math.isnan(m_mid):
            raise NotConverged(f"shot failed at gamma = {mid}")
        if best is None or abs(m_mid) < abs(best[1]):
            best = (mid, m_mid, payload)
        if abs(m_mid) <= controls.bisect_tol:
            break
        if (m_mid > 0.0) == (m_lo > 0.0):
            lo, m_lo = mid, m_mid
        else:
            hi = mid
    return best, (lo, hi), it


class _Done(Exception):
    pass


def _polish(fn: Callable[[float], tuple], g0: float, bracket: tuple[float, float],
            m_lo_sign: float, controls: SolverControls):
    """Re-solve rho(gamma) = b with fn (the tight-tolerance shot) near g0.

    The tight mismatch differs from the bisected one by the integration
    error, so a small bracket around g0 is grown until it changes sign and
    is then handed to Brent's method. Returns the best evaluation or None.
    """
    best = [None]

    def g(x):
        m, payload = fn(x)
        if math.isnan(m):
            raise NotConverged(f"shot failed at gamma = {x}")
        if best[0] is None or abs(m) < abs(best[0][1]):
            best[0] = (x, m, payload)
        if abs(m) <= controls.bisect_tol:
            raise _Done
        return m

    lo_lim, hi_lim = bracket
    try:
        m0 = g(g0)
        # the side where the coarse mismatch had the opposite sign of m0
        toward_hi = (m0 > 0.0) == (m_lo_sign > 0.0)
        step = 1e-9 * g0
        other = g0
        m_other = m0
        while (m_other > 0.0) == (m0 > 0.0):
            other = g0 + step if toward_hi else g0 - step
            if not lo_lim * 0.5 < other < hi_lim * 2.0 or other <= 0.0:
                return best[0]
            m_other = g(other)
            step *= 8.0
        lo, hi = sorted((g0, other))
        brentq(g, lo, hi, xtol=1e-15 * g0, rtol=4.0 * np.finfo(float).eps, maxiter=100)
    except (_Done, NotConverged):
        pass
    except (ValueError, RuntimeError):
        pass
    return best[0]


def _solve_for_b(fn: Callable[[float], tuple], spec: ProblemSpec, controls: SolverControls,
                 refine: int, fn_final: Optional[Callable[[float], tuple]] = None):
    """Scan, bracket and bisect fn(gamma) = rho(gamma) - b, then polish with fn_final."""
    b = spec.b
    gammas = [float(g) for g in
              np.geomspace(controls.gamma_min, controls.gamma_max, controls.scan_points)]
    mism = [fn(g)[0] for g in gammas]
    start = _suffix_from_mismatch(mism)
    # split the flip between the last truncated shot and the suffix
    for _ in range(refine):
        if not 0 < start < len(gammas):
            break
        g_new = math.sqrt(gammas[start - 1] * gammas[start])
        gammas.insert(start, g_new)
        mism.insert(start, fn(g_new)[0])
        start = _suffix_from_mismatch(mism)
    if start == len(gammas):
        raise BracketNotFound(
            f"no shot in [{controls.gamma_min}, {controls.gamma_max}] returns to zero")
    brackets = _find_brackets(gammas, mism, start)
    if not brackets:
        if all(m > 0.0 for m in mism[start:]):
            raise BracketNotFound(f"rho(gamma) > b = {b} up to gamma_max = {controls.gamma_max}")
        raise BracketNotFound(f"rho(gamma) < b = {b} already at gamma_min = {controls.gamma_min}")
    i = brackets[-1]
    lo, hi = gammas[i], gammas[i + 1]
    if mism[i] == 0.0 or mism[i + 1] == 0.0:
        g = lo if mism[i] == 0.0 else hi
        m, payload = fn(g)
        best, iters = (g, m, payload), 0
    else:
        best, (lo, hi), iters = _bisect(fn, lo, hi, mism[i], controls)
    if best is None:
        raise NotConverged("bisection produced no evaluation")
    polished = False
    if fn_final is not None:
        sign_lo = mism[i] if mism[i] != 0.0 else -mism[i + 1]
        fine = _polish(fn_final, best[0], (gammas[i], gammas[i + 1]), sign_lo, controls)
        if fine is not None and fine[2] is not None:
            best, polished = fine, True
    return best[0], best[1], best[2], len(brackets), iters, polished


def _suffix_from_mismatch(mism) -> int:
    start = len(mism)
    while start > 0 and math.isfinite(mism[start - 1]):
        start -= 1
    return start


def solve_bvp(spec: ProblemSpec, controls: SolverControls = DEFAULT_CONTROLS,
              refine: int = 2, polish: bool = True) -> Solution:
    """Positive solution with rho(gamma*) = b (largest bracketed gamma).

    With `polish`, the bisected gamma is refined against shots integrated
    with `controls.tightened()`, and the returned trajectory is that shot.
    """
    validate_spec(spec)
    controls.validate(spec)

    def shot(ctrl):
        def fn(gamma):
            try:
                traj, out = integrate(gamma, spec, ctrl)
            except NumericalFailure:
                return math.nan, None
            return _mismatch(out.rho, spec.b), (traj, out)
        return fn

    fine = shot(controls.tightened()) if polish else None
    gamma, mism, (traj, out), nbr, iters, done = _solve_for_b(
        shot(controls), spec, controls, refine, fine)
    return Solution(gamma_star=gamma, trajectory=traj, sign=Sign.POSITIVE,
                    boundary_residual=boundary_residual(traj, out, spec.b), spec=spec,
                    outcome=out, brackets_found=nbr, iterations=iters, rho_error=abs(mism),
                    polished=done)


def negative_solution(spec: ProblemSpec, controls: SolverControls = DEFAULT_CONTROLS,
                      refine: int = 2, polish: bool = True) -> Solution:
    """-v where v is the positive solution for the reflected slopes (k+<->k-, K+<->K-)."""
    pos = solve_bvp(spec.reflected(), controls, refine, polish)
    out = pos.outcome
    neg_out = ShotOutcome(
        gamma=out.gamma, tau=out.tau,
        u_at_tau=None if out.u_at_tau is None else -out.u_at_tau,
        rho=out.rho, du_at_rho=None if out.du_at_rho is None else -out.du_at_rho,
        termination=out.termination)
    return Solution(gamma_star=pos.gamma_star, trajectory=pos.trajectory.negated(),
                    sign=Sign.NEGATIVE, boundary_residual=pos.boundary_residual, spec=spec,
                    outcome=neg_out, brackets_found=pos.brackets_found,
                    iterations=pos.iterations, rho_error=pos.rho_error, polished=pos.polished)


def _nodal_shot(gamma: float, spec: ProblemSpec, controls: SolverControls, k: int):
    """Chain k one-signed shots: the j-th solves the positive problem for the
    (-1)^(j-1)-reflected slopes, starting from the previous zero."""
    pieces = []
    r0, g = spec.a, gamma
    for j in range(k):
        sp = spec if j % 2 == 0 else spec.reflected()
        traj, out = integrate(g, sp, controls, r_start=r0)
        pieces.append((traj, out))
        if not out.hit_zero:
            return pieces, None
        r0, g = out.rho, -out.du_at_rho
    return pieces, r0


def _join(pieces) -> Trajectory:
    rs, us, ws, dws, segs, patches, events = [], [], [], [], [], [], []
    for j, (traj, _) in enumerate(pieces):
        t = traj if j % 2 == 0 else traj.negated()
        keep = slice(1, None) if j > 0 else slice(None)
        rs.append(t.r[keep]); us.append(t.u[keep]); ws.append(t.w[keep]); dws.append(t.dw[keep])
        segs += t.segments
        patches += t.patches
        events += t.events
    first = pieces[0][0]
    return Trajectory(np.concatenate(rs), np.concatenate(us), np.concatenate(ws),
                      np.concatenate(dws), first.alpha, first.tau, events, segs, patches)


def nodal_solution(spec: ProblemSpec, k: int, controls: SolverControls = DEFAULT_CONTROLS,
                   refine: int = 2, polish: bool = True) -> Solution:
    """Radial solution with exactly k nodal regions, positive on the first.

    Continuing the shot through each zero with the matched slope keeps u and
    w continuous at every interface, so the k-1 interface radii are the
    zeros of a single shot and only gamma is solved for.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return solve_bvp(spec, controls, refine, polish)
    validate_spec(spec)
    controls.validate(spec)

    def shot(ctrl):
        def fn(gamma):
            try:
                pieces, rho_k = _nodal_shot(gamma, spec, ctrl, k)
            except NumericalFailure:
                return math.nan, None
            return _mismatch(rho_k, spec.b), pieces
        return fn

    fine = shot(controls.tightened()) if polish else None
    gamma, mism, pieces, nbr, iters, done = _solve_for_b(shot(controls), spec, controls,
                                                         refine, fine)
    if pieces is None or len(pieces) < k or not pieces[-1][1].hit_zero:
        raise NotConverged(f"nodal shot with k = {k} did not close")
    traj = _join(pieces)
    last = pieces[-1][1]
    sgn = 1.0 if (k - 1) % 2 == 0 else -1.0
    out = ShotOutcome(gamma=gamma, tau=pieces[0][1].tau, u_at_tau=pieces[0][1].u_at_tau,
                      rho=last.rho, du_at_rho=sgn * last.du_at_rho,
                      termination=Termination.HIT_ZERO)
    return Solution(gamma_star=gamma, trajectory=traj, sign=Sign.POSITIVE,
                    boundary_residual=abs(out.du_at_rho) * abs(spec.b - out.rho), spec=spec,
                    outcome=out, brackets_found=nbr, iterations=iters, rho_error=abs(mism),
                    polished=done, nodal_radii=[p[1].rho for p in pieces[:-1]])
