"""Runtime checks of the a-priori estimates on computed shots.

All energies are evaluated from the stored (u, w) samples, using
|u'|^(alpha+2) = |w|^((alpha+2)/(alpha+1)), never by differencing u.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .critical_patch import patch_residual
from .errors import NonIntegrable, QuadratureFailure
from .integrator import ShotOutcome, Trajectory
from .model import DEFAULT_CONTROLS, ProblemSpec, SolverControls, validate_spec
from .radial_operator import PhasePoint, eval_radial_F, recover_ddu

__all__ = [
    "EnergySample",
    "MonotoneCheck",
    "BoundsReport",
    "energies",
    "energy_arrays",
    "check_monotonicity",
    "check_bounds",
    "cp_constant",
    "cp_quadrature",
    "residual",
    "liouville_flag",
    "lambda_inequality",
    "du_sign_changes",
    "truncated_decay",
    "spec_hash",
    "verification_report",
]

MONO_TOL = 1e-6
RESIDUAL_TOL = 1e-5


@dataclass(frozen=True)
class EnergySample:
    r: float
    E1: float
    E2: float
    calE1: float
    calE2: float


@dataclass(frozen=True)
class MonotoneCheck:
    ok: bool
    worst: float  # largest step in the wrong direction, 0 if none
    checked: int  # number of sample pairs compared


@dataclass(frozen=True)
class BoundsReport:
    lb1_margin: float
    ub1_margin: float
    ub2_margin: float
    lastlow_margin: float
    elementary_margin: float
    cp_value: float
    p_tilde_minus: Optional[float]
    p_tilde_flag: bool
    spec_hash: str
    energy_E1: Optional[MonotoneCheck] = None
    energy_E2: Optional[MonotoneCheck] = None
    calE1: Optional[MonotoneCheck] = None
    calE2: Optional[MonotoneCheck] = None

    @property
    def asserted_bounds_ok(self) -> bool:
        """lb1, ub1, ub2 and u(tau) <= gamma (tau - a); lastlow is only reported."""
        return min(self.lb1_margin, self.ub1_margin, self.ub2_margin,
                   self.elementary_margin) >= 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def spec_hash(spec: ProblemSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def energy_arrays(traj: Trajectory, spec: ProblemSpec) -> dict[str, np.ndarray]:
    d = validate_spec(spec)
    al, p = spec.alpha, spec.p
    lam, Lam = spec.lambda_lo, spec.lambda_hi
    kin = np.abs(traj.w) ** ((al + 2.0) / (al + 1.0)) / (al + 2.0)
    pot = np.abs(traj.u) ** (p + 1.0) / (p + 1.0)
    weight = traj.r ** ((2.0 + al) * (d.n_minus - 1.0))
    return {
        "r": traj.r,
        "E1": weight * (kin + pot / Lam),
        "E2": kin + pot / lam,
        "calE1": weight * (kin + pot / lam),
        "calE2": kin + pot / Lam,
    }


def energies(traj: Trajectory, spec: ProblemSpec) -> list[EnergySample]:
    e = energy_arrays(traj, spec)
    return [EnergySample(float(r), float(a), float(b), float(c), float(d))
            for r, a, b, c, d in zip(e["r"], e["E1"], e["E2"], e["calE1"], e["calE2"])]


def _monotone(v: np.ndarray, increasing: bool, tol: float = MONO_TOL) -> MonotoneCheck:
    if len(v) < 2:
        return MonotoneCheck(True, 0.0, 0)
    step = np.diff(v)
    wrong = -step if increasing else step
    allowed = tol * (1.0 + np.abs(v[1:]))
    worst = float(max(wrong.max(), 0.0))
    return MonotoneCheck(bool(np.all(wrong <= allowed)), worst, len(step))


def _split(traj: Trajectory, tau: float):
    """Masks for [a, tau] and [tau, end] on the sample radii."""
    r = traj.r
    eps = 1e-12 * max(1.0, abs(tau))
    return r <= tau + eps, r >= tau - eps


def check_monotonicity(samples, traj: Trajectory, spec: ProblemSpec,
                       tol: float = MONO_TOL) -> dict[str, MonotoneCheck]:
    """E1 up and E2 down on [tau, rho]; calE1 up and calE2 down on [a, tau].

    `samples` is either the output of `energies` or of `energy_arrays`.
    """
    if isinstance(samples, dict):
        e = samples
    else:
        e = {k: np.array([getattr(s, k) for s in samples])
             for k in ("r", "E1", "E2", "calE1", "calE2")}
    tau = traj.tau if traj.tau is not None else float(e["r"][np.argmax(np.abs(traj.u))])
    left, right = _split(traj, tau)
    return {
        "E1": _monotone(e["E1"][right], True, tol),
        "E2": _monotone(e["E2"][right], False, tol),
        "calE1": _monotone(e["calE1"][left], True, tol),
        "calE2": _monotone(e["calE2"][left], False, tol),
    }


def cp_quadrature(p: float, alpha: float, h: float) -> float:
    """Double-exponential (tanh-sinh) rule with step h for
    c_p = int_0^1 (1 - t^(p+1))^(-1/(alpha+2)) dt.

    The nodes come with their distance to 1 computed directly, so the
    endpoint factor 1 - t^(p+1) never suffers cancellation.
    """
    beta = 1.0 / (alpha + 2.0)
    if not beta < 1.0:
        raise NonIntegrable(f"exponent 1/(alpha+2) = {beta} >= 1")
    if not p > -1.0:
        raise NonIntegrable(f"p = {p} <= -1")
    # the t -> 1 tail decays like exp(-2 (1-beta) |y|); run it out to ~1e-20
    y_max = 23.0 / (1.0 - beta)
    kmax = math.ceil(math.asinh(2.0 * y_max / math.pi) / h)
    s = np.arange(-kmax, kmax + 1) * h
    y = 0.5 * math.pi * np.sinh(s)
    ay = np.abs(y)
    log_small = -2.0 * ay - np.log1p(np.exp(-2.0 * ay))  # log distance to the near endpoint
    small = np.exp(log_small)
    log_dt = (math.log(math.pi * h) + np.log(np.cosh(s)) + log_small
              - np.log1p(np.exp(-2.0 * ay)))
    with np.errstate(divide="ignore", invalid="ignore"):
        gap_left = -np.expm1((p + 1.0) * log_small)
        gap_right = -np.expm1((p + 1.0) * np.log1p(-small))
        log_gap = np.where(y < 0.0, np.log(gap_left),
                           np.where(small > 1e-200, np.log(gap_right),
                                    math.log(p + 1.0) + log_small))
    vals = np.exp(log_dt - beta * log_gap)
    if not np.all(np.isfinite(vals)):
        raise QuadratureFailure("non-finite integrand in c_p")
    return float(math.fsum(vals))


def cp_constant(p: float, alpha: float, tol: float = 1e-14, h0: float = 0.25,
                max_halvings: int = 8) -> float:
    """c_p, halving the tanh-sinh step until two levels agree to `tol`."""
    h = h0
    prev = cp_quadrature(p, alpha, h)
    for _ in range(max_halvings):
        h *= 0.5
        cur = cp_quadrature(p, alpha, h)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise QuadratureFailure(f"c_p(p={p}, alpha={alpha}) did not settle")


def liouville_flag(spec: ProblemSpec) -> tuple[Optional[float], bool]:
    pt = validate_spec(spec).p_tilde_minus
    return pt, pt is not None and spec.p <= pt


def check_bounds(outcome: ShotOutcome, spec: ProblemSpec,
                 traj: Optional[Trajectory] = None) -> BoundsReport:
    """Signed slack of each a-priori inequality (>= 0 means it holds).

    With a trajectory, the four energy monotonicity checks are filled in too.
    """
    if outcome.tau is None or outcome.u_at_tau is None:
        raise ValueError("check_bounds needs a shot that reached its maximum")
    d = validate_spec(spec)
    al, p, a = spec.alpha, spec.p, spec.a
    lam, Lam, nm = spec.lambda_lo, spec.lambda_hi, d.n_minus
    g, tau, ut = outcome.gamma, outcome.tau, abs(outcome.u_at_tau)
    q = p - al - 1.0

    lhs = ut ** (p + 1.0)
    lb1 = lhs - lam * (p + 1.0) / (al + 2.0) * (a / tau) ** ((2.0 + al) * (nm - 1.0)) * g ** (al + 2.0)
    ub1 = Lam * (p + 1.0) / (al + 2.0) * g ** (al + 2.0) - lhs
    cp = cp_constant(p, al)
    K = (Lam * (p + 1.0) / (2.0 + al)) ** (1.0 / q) * cp ** ((al + 2.0) / q)
    ub2 = K * (tau - a) ** (-(al + 2.0) / q) - ut

    neg = max(-al, 0.0)
    factor = 2.0 ** (-neg / (1.0 - neg))
    if abs(nm - 2.0) < 1e-12:
        growth = a * math.log(tau / a)
    else:
        growth = a ** (nm - 1.0) / (2.0 - nm) * (tau ** (2.0 - nm) - a ** (2.0 - nm))
    C = ((al + 1.0) ** ((2.0 + al) / (al + 1.0)) / (al + 2.0)
         * (K ** p / lam) ** (1.0 / (al + 1.0)))
    lastlow = ut - (factor * g * growth - C * (tau - a) ** (-(al + 2.0) / q))
    elementary = g * (tau - a) - ut

    pt, flag = liouville_flag(spec)
    mono = {}
    if traj is not None:
        mono = check_monotonicity(energy_arrays(traj, spec), traj, spec)
    return BoundsReport(
        lb1_margin=lb1, ub1_margin=ub1, ub2_margin=ub2, lastlow_margin=lastlow,
        elementary_margin=elementary, cp_value=cp, p_tilde_minus=pt, p_tilde_flag=flag,
        spec_hash=spec_hash(spec),
        energy_E1=mono.get("E1"), energy_E2=mono.get("E2"),
        calE1=mono.get("calE1"), calE2=mono.get("calE2"))


def residual(traj: Trajectory, spec: ProblemSpec, w_switch: float = DEFAULT_CONTROLS.w_switch,
             detail: bool = False):
    """Sup of |-|u'|^alpha F(r, u', u'') - |u|^(p-1) u| / max(1, |u|^p).

    Sampled at the midpoint of every dense segment, with u'' recovered from
    the interpolant's dw/dr; samples with |w| <= w_switch are skipped.
    Critical patches contribute their own spectral defect.
    """
    al, p = spec.alpha, spec.p
    worst, where = 0.0, None
    for seg in traj.segments:
        for x in (0.25, 0.5, 0.75):
            r = seg.r0 + x * seg.h
            u, w = seg(r)
            if abs(w) <= w_switch:
                continue
            dw = seg.derivative(r)[1]
            pt = PhasePoint(r, u, w)
            du = math.copysign(abs(w) ** (1.0 / (1.0 + al)), w)
            ddu = recover_ddu(pt, dw, al)
            lhs = -abs(du) ** al * eval_radial_F(r, du, ddu, spec)
            rhs = math.copysign(abs(u) ** p, u)
            err = abs(lhs - rhs) / max(1.0, abs(u) ** p)
            if err > worst:
                worst, where = err, r
    for patch in traj.patches:
        # patches are solved in the frame where u > 0; a negated profile used the reflection
        frame = spec if traj.evaluate(patch.r0)[0] >= 0.0 else spec.reflected()
        err = patch_residual(patch, frame, w_floor=w_switch)
        if err > worst:
            worst, where = err, patch.r0
    return (worst, where) if detail else worst


def lambda_inequality(traj: Trajectory, spec: ProblemSpec, tol: float = 1e-7) -> MonotoneCheck:
    """|u'|^alpha (u'' + Lambda (N-1)/(lambda r) u') <= -u^p / Lambda on [tau, rho].

    In momentum form the left side is w'/(1+alpha) + Lambda (N-1)/(lambda r) w.
    The slack is relative to max(1, u^p / Lambda).
    """
    if traj.tau is None:
        return MonotoneCheck(True, 0.0, 0)
    _, right = _split(traj, traj.tau)
    r, u, w, dw = traj.r[right], traj.u[right], traj.w[right], traj.dw[right]
    c = spec.lambda_hi * (spec.dimension - 1) / spec.lambda_lo
    up = np.abs(u) ** spec.p / spec.lambda_hi
    excess = (dw / (1.0 + spec.alpha) + c * w / r + up) / np.maximum(1.0, up)
    worst = float(max(excess.max(initial=0.0), 0.0))
    return MonotoneCheck(bool(worst <= tol), worst, len(r))


def du_sign_changes(traj: Trajectory) -> int:
    """Sign changes of u' (equivalently of w) along the samples, zeros skipped."""
    s = np.sign(traj.w)
    s = s[s != 0.0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def truncated_decay(traj: Trajectory) -> dict:
    """Directional decay check for a shot cut off at r_max: u decreasing after its
    maximum and well below that maximum at the end."""
    i = int(np.argmax(traj.u))
    tail = traj.u[i:]
    decreasing = bool(np.all(np.diff(tail) <= 1e-12 * max(1.0, traj.u[i])))
    ratio = float(traj.u[-1] / traj.u[i]) if traj.u[i] > 0 else 0.0
    return {"decreasing": decreasing, "end_to_max_ratio": ratio,
            "r_end": float(traj.r[-1]), "u_end": float(traj.u[-1])}


def verification_report(traj: Trajectory, outcome: ShotOutcome, spec: ProblemSpec,
                        controls: SolverControls = DEFAULT_CONTROLS) -> dict:
    """Every diagnostic on one shot; `passed` is the conjunction of the asserted ones."""
    sgn = 1.0 if outcome.u_at_tau is None or outcome.u_at_tau >= 0.0 else -1.0
    frame_spec = spec if sgn > 0 else spec.reflected()
    frame = traj if sgn > 0 else traj.negated()
    pt, flag = liouville_flag(spec)
    report: dict = {
        "spec_hash": spec_hash(spec),
        "termination": outcome.termination.value,
        "liouville": {"p_tilde_minus": pt, "p_le_p_tilde": flag},
        "du_sign_changes": du_sign_changes(frame),
    }
    checks = {"single_maximum": report["du_sign_changes"] == 1}
    if outcome.hit_zero:
        bounds = check_bounds(_positive(outcome, sgn), frame_spec, frame)
        report["bounds"] = bounds.to_dict()
        for name in ("energy_E1", "energy_E2", "calE1", "calE2"):
            checks[f"monotone_{name}"] = getattr(bounds, name).ok
        checks["bounds_lb1_ub1_ub2"] = bounds.asserted_bounds_ok
        res, at = residual(traj, spec, controls.w_switch, detail=True)
        report["residual"] = {"value": res, "at_r": at, "tolerance": RESIDUAL_TOL}
        checks["residual"] = res <= RESIDUAL_TOL
        lam = lambda_inequality(frame, frame_spec)
        report["lambda_inequality"] = asdict(lam)
        checks["lambda_inequality"] = lam.ok
    else:
        report["truncated"] = truncated_decay(frame)
        checks["truncated_decay"] = report["truncated"]["decreasing"]
    report["checks"] = checks
    report["passed"] = all(checks.values())
    return report


def _positive(outcome: ShotOutcome, sgn: float) -> ShotOutcome:
    if sgn > 0:
        return outcome
    return ShotOutcome(outcome.gamma, outcome.tau, -outcome.u_at_tau, outcome.rho,
                       -outcome.du_at_rho, outcome.termination)
