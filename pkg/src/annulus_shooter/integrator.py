"""Adaptive shooting integrator for the momentum system.

One shot starts at r = a with u = 0, w = gamma^(1+alpha) and runs a
Dormand-Prince 5(4) pair with its quartic dense output. Three events are
tracked:

* w reaching zero: the unique maximum tau of u. For alpha > 0 the last
  stretch |w| < w_switch is closed analytically and the maximum is crossed
  with `solve_patch`; for alpha <= 0 the system is integrated straight through.
* u reaching zero after tau: rho, located on the interpolant and polished
  with fresh steps plus Newton on u.
* r reaching r_max: the shot is truncated and rho is left undefined.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .critical_patch import CriticalPatch, solve_patch
from .errors import NoSignChange, StepFailure
from .model import DEFAULT_CONTROLS, ProblemSpec, SolverControls, validate_spec
from .radial_operator import MomentumField, PhasePoint, du_from_w

__all__ = [
    "Termination",
    "DenseSegment",
    "Trajectory",
    "ShotOutcome",
    "step",
    "locate_event",
    "integrate",
]

# Dormand-Prince tableau, taken from scipy so the coefficients are not retyped
_C = [float(c) for c in RK45.C]
_A = [[float(x) for x in row[:i]] for i, row in enumerate(RK45.A)]
_B = [float(b) for b in RK45.B]
_E = [float(e) for e in RK45.E]
_P = RK45.P  # (7, 4) dense-output matrix

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class Termination(enum.Enum):
    HIT_ZERO = "HitZero"
    TRUNCATED = "Truncated"
    STEP_FAILURE = "StepFailure"


@dataclass
class DenseSegment:
    """Quartic continuous extension of one accepted step."""

    r0: float
    h: float
    u0: float
    w0: float
    Q: np.ndarray  # (2, 4)

    def __call__(self, r: float) -> tuple[float, float]:
        x = (r - self.r0) / self.h
        pw = np.array([x, x * x, x ** 3, x ** 4])
        du, dw = self.h * (self.Q @ pw)
        return self.u0 + float(du), self.w0 + float(dw)

    def derivative(self, r: float) -> tuple[float, float]:
        x = (r - self.r0) / self.h
        pw = np.array([1.0, 2.0 * x, 3.0 * x * x, 4.0 * x ** 3])
        d = self.Q @ pw
        return float(d[0]), float(d[1])


@dataclass
class Trajectory:
    """Sampled profile of one shot. `dw` is dw/dr at each sample."""

    r: np.ndarray
    u: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    alpha: float
    tau: Optional[float] = None
    events: list = field(default_factory=list)
    segments: list = field(default_factory=list, repr=False)
    patches: list = field(default_factory=list, repr=False)

    @property
    def du(self) -> np.ndarray:
        beta = 1.0 / (1.0 + self.alpha)
        return np.sign(self.w) * np.abs(self.w) ** beta

    @property
    def points(self) -> list[PhasePoint]:
        return [PhasePoint(float(r), float(u), float(w)) for r, u, w in zip(self.r, self.u, self.w)]

    def __len__(self) -> int:
        return len(self.r)

    def negated(self) -> "Trajectory":
        """The reflected profile -u (used for negative solutions)."""
        segs = [DenseSegment(s.r0, s.h, -s.u0, -s.w0, -s.Q) for s in self.segments]
        return Trajectory(self.r.copy(), -self.u, -self.w, -self.dw, self.alpha, self.tau,
                          list(self.events), segs, list(self.patches))

    def evaluate(self, r: float) -> tuple[float, float]:
        """(u, w) at r from the dense output; linear interpolation inside patches."""
        starts = [s.r0 for s in self.segments]
        i = bisect.bisect_right(starts, r) - 1
        if i >= 0:
            seg = self.segments[i]
            if r <= seg.r0 + seg.h * (1.0 + 1e-12):
                return seg(r)
        return float(np.interp(r, self.r, self.u)), float(np.interp(r, self.r, self.w))


@dataclass(frozen=True)
class ShotOutcome:
    gamma: float
    tau: Optional[float]
    u_at_tau: Optional[float]
    rho: Optional[float]  # None marks a truncated shot
    du_at_rho: Optional[float]
    termination: Termination

    @property
    def hit_zero(self) -> bool:
        return self.termination is Termination.HIT_ZERO

    def as_row(self) -> dict:
        return {"gamma": self.gamma, "tau": self.tau, "u_at_tau": self.u_at_tau,
                "rho": self.rho, "du_at_rho": self.du_at_rho,
                "termination": self.termination.value}


def _dopri(f, r, u, w, k1, h):
    ks = [k1]
    for i in range(1, 6):
        a = _A[i]
        du = dw = 0.0
        for j in range(i):
            du += a[j] * ks[j][0]
            dw += a[j] * ks[j][1]
        ks.append(f(r + _C[i] * h, u + h * du, w + h * dw))
    du = dw = 0.0
    for j in range(6):
        du += _B[j] * ks[j][0]
        dw += _B[j] * ks[j][1]
    u1, w1 = u + h * du, w + h * dw
    ks.append(f(r + h, u1, w1))
    eu = ew = 0.0
    for j in range(7):
        eu += _E[j] * ks[j][0]
        ew += _E[j] * ks[j][1]
    return u1, w1, ks, h * eu, h * ew


def _err_norm(u, w, u1, w1, eu, ew, rtol, atol):
    su = atol + rtol * max(abs(u), abs(u1))
    sw = atol + rtol * max(abs(w), abs(w1))
    return math.sqrt(0.5 * ((eu / su) ** 2 + (ew / sw) ** 2))


def _dense(r, h, u, w, ks) -> DenseSegment:
    K = np.array(ks)  # (7, 2)
    return DenseSegment(r, h, u, w, K.T @ _P)


def step(pt: PhasePoint, h: float, spec: ProblemSpec,
         controls: SolverControls = DEFAULT_CONTROLS) -> tuple[PhasePoint, float]:
    """One Dormand-Prince step; returns the new point and the scaled error norm."""
    if h < controls.h_min:
        raise StepFailure(f"h = {h} below h_min = {controls.h_min}")
    f = MomentumField(spec)
    u1, w1, _, eu, ew = _dopri(f, pt.r, pt.u, pt.w, f(pt.r, pt.u, pt.w), h)
    err = _err_norm(pt.u, pt.w, u1, w1, eu, ew, controls.rel_tol, controls.abs_tol)
    return PhasePoint(pt.r + h, u1, w1), err


def locate_event(f: Callable[[float], float], bracket: tuple[float, float],
                 tol: float = 1e-12) -> float:
    """Root of f in the bracket by Brent's method."""
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise NoSignChange(f"f({lo}) = {flo} and f({hi}) = {fhi} have the same sign")
    return brentq(f, lo, hi, xtol=tol, rtol=4.0 * np.finfo(float).eps, maxiter=500)


class _Shot:
    """Mutable state of one integration; `integrate` is the public face."""

    def __init__(self, spec, controls, use_patch):
        self.spec = spec
        self.c = controls
        self.f = MomentumField(spec)
        self.alpha = float(spec.alpha)
        self.beta = 1.0 / (1.0 + self.alpha)
        self.use_patch = (self.alpha > 0.0) if use_patch is None else use_patch
        self.rs, self.us, self.ws, self.dws = [], [], [], []
        self.segments: list[DenseSegment] = []
        self.patches: list[CriticalPatch] = []
        self.events: list[tuple[float, str]] = []
        self.nsteps = 0

    def record(self, r, u, w, dw):
        if self.rs and r <= self.rs[-1]:
            return
        self.rs.append(r)
        self.us.append(u)
        self.ws.append(w)
        self.dws.append(dw)

    def advance(self, r, u, w, k1, h, r_stop):
        """One accepted step (retrying on rejection). Returns the new state."""
        c = self.c
        while True:
            self.nsteps += 1
            if self.nsteps > c.max_steps:
                raise StepFailure(f"more than {c.max_steps} steps at r = {r}")
            h = min(h, c.h_max, r_stop - r)
            if h < c.h_min and r_stop - r > c.h_min:
                raise StepFailure(f"step size {h:.3e} below h_min at r = {r}")
            u1, w1, ks, eu, ew = _dopri(self.f, r, u, w, k1, h)
            err = _err_norm(u, w, u1, w1, eu, ew, c.rel_tol, c.abs_tol)
            if err <= 1.0 and math.isfinite(u1) and math.isfinite(w1):
                factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
                return h, u1, w1, ks, max(factor, _MIN_FACTOR)
            if not math.isfinite(err):
                factor = _MIN_FACTOR
            else:
                factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            h *= min(factor, 1.0)
            if h < c.h_min:
                raise StepFailure(f"step size {h:.3e} below h_min at r = {r}")

    def single(self, r, u, w, h):
        u1, w1, ks, _, _ = _dopri(self.f, r, u, w, self.f(r, u, w), h)
        return u1, w1, ks


def integrate(gamma: float, spec: ProblemSpec, controls: SolverControls = DEFAULT_CONTROLS,
              r_start: Optional[float] = None,
              use_patch: Optional[bool] = None) -> tuple[Trajectory, ShotOutcome]:
    """Shoot from u(r_start) = 0, u'(r_start) = gamma (r_start defaults to a).

    `use_patch` forces the critical patch on or off; by default it is used
    exactly when alpha > 0.
    """
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    gamma = float(gamma)
    validate_spec(spec)
    controls.validate(spec)
    sh = _Shot(spec, controls, use_patch)
    f = sh.f
    c = controls
    r = float(spec.a if r_start is None else r_start)
    r_max = c.resolved_r_max(spec)
    u = 0.0
    w = gamma ** (1.0 + sh.alpha)
    # a shot that starts below the switch threshold still needs a non-empty approach
    w_sw = min(c.w_switch, 1e-3 * w) if sh.use_patch else 0.0
    k1 = f(r, u, w)
    sh.record(r, u, w, k1[1])
    h = c.h_init
    tau = u_tau = None
    rising = True
    termination = Termination.TRUNCATED
    rho = w_rho = None

    while r < r_max:
        h_used, u1, w1, ks, factor = sh.advance(r, u, w, k1, h, r_max)
        seg = _dense(r, h_used, u, w, ks)
        r1 = r + h_used
        if r_max - r1 < 1e-12 * r_max:
            r1 = r_max

        if rising and w1 < w_sw or (rising and w1 <= 0.0):
            if sh.use_patch:
                # stop where w = w_switch, close the last stretch analytically, patch across
                r_s = locate_event(lambda x: seg(x)[1] - w_sw, (r, r1), tol=c.abs_tol)
                if r_s > r:
                    u_s, w_s, ks_s = sh.single(r, u, w, r_s - r)
                    sh.segments.append(_dense(r, r_s - r, u, w, ks_s))
                else:
                    u_s, w_s = u, w
                if w_s <= 0.0:
                    u_s, w_s = seg(r_s)
                    w_s = max(w_s, 0.0)
                slope = -f(r_s, u_s, w_s)[1]
                sh.record(r_s, u_s, w_s, -slope)
                gap = w_s / slope
                tau = r_s + gap
                u_tau = u_s + w_s ** (1.0 + sh.beta) / (slope * (1.0 + sh.beta))
                sh.events.append((tau, "tau"))
                patch = solve_patch(tau, u_tau, spec, c, b_outer=max(spec.b, tau))
                sh.patches.append(patch)
                pr, pu, pw, pdw = patch.samples()
                for i in range(len(pr)):
                    sh.record(float(pr[i]), float(pu[i]), float(pw[i]), float(pdw[i]))
                sh.events.append((patch.r_exit, "patch_exit"))
                r, u, w = patch.r_exit, patch.u_exit, patch.w_exit
                k1 = f(r, u, w)
                h = min(h_used, patch.delta)
                rising = False
                continue
            tau = locate_event(lambda x: seg(x)[1], (r, r1), tol=c.abs_tol)
            u_tau = seg(tau)[0]
            sh.record(tau, u_tau, 0.0, f(tau, u_tau, 0.0)[1])
            sh.events.append((tau, "tau"))
            rising = False

        if not rising and u1 <= 0.0:
            rho, u_r, w_rho, ks_r = _polish_zero(sh, seg, r, u, w, r1)
            if rho > r:
                sh.segments.append(_dense(r, rho - r, u, w, ks_r))
            sh.record(rho, 0.0, w_rho, f(rho, 0.0, w_rho)[1])
            sh.events.append((rho, "rho"))
            termination = Termination.HIT_ZERO
            break

        sh.segments.append(seg)
        r, u, w, k1 = r1, u1, w1, ks[-1]
        sh.record(r, u, w, k1[1])
        h = h_used * factor

    if termination is Termination.TRUNCATED:
        sh.events.append((r, "truncated"))
    traj = Trajectory(np.array(sh.rs), np.array(sh.us), np.array(sh.ws), np.array(sh.dws),
                      sh.alpha, tau, sh.events, sh.segments, sh.patches)
    outcome = ShotOutcome(
        gamma=float(gamma), tau=tau, u_at_tau=u_tau,
        rho=rho, du_at_rho=None if w_rho is None else du_from_w(w_rho, sh.alpha),
        termination=termination)
    return traj, outcome


def _polish_zero(sh: _Shot, seg: DenseSegment, r, u, w, r1):
    """Zero of u inside (r, r1]: interpolant root, then Newton on fresh steps."""
    rho = locate_event(lambda x: seg(x)[0], (r, r1), tol=sh.c.abs_tol)
    u_r, w_r, ks = u, w, None
    for _ in range(4):
        if rho <= r:
            break
        u_r, w_r, ks = sh.single(r, u, w, rho - r)
        du = du_from_w(w_r, sh.alpha)
        if du >= 0.0:
            break
        shift = u_r / du
        rho = min(max(rho - shift, r), r1)
        if abs(shift) <= 1e-15 * rho:
            break
    if rho > r:
        u_r, w_r, ks = sh.single(r, u, w, rho - r)
    return rho, u_r, w_r, ks
