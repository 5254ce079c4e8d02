"""The radial (kK) operator, its Pucci envelopes and the momentum-form ODE.

The ODE is integrated in the variables (u, w) with w = |u'|^alpha u'. Since
|u'|^alpha is a positive scalar, positive homogeneity of G_k gives

    (N-1)/r G_k(w) + G_K(w') / (1+alpha) = -u^p,

which is solved for w' with the inverse of G_K. The w' component is
Lipschitz in w even where u' = 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DegenerateMomentum, InvalidRegime
from .model import ProblemSpec

__all__ = [
    "CaseRegime",
    "PhasePoint",
    "MomentumField",
    "gk",
    "gk_inverse",
    "eval_radial_F",
    "pucci_envelopes",
    "classify_case",
    "momentum_rhs",
    "recover_ddu",
    "du_from_w",
]


class CaseRegime(enum.Enum):
    CASE1 = 1  # u' >= 0, u'' <= 0
    CASE2 = 2  # u' <= 0, u'' <= 0
    CASE3 = 3  # u' <= 0, u'' >= 0


@dataclass(frozen=True)
class PhasePoint:
    r: float
    u: float
    w: float


def gk(x: float, slope_plus: float, slope_minus: float) -> float:
    """G(x) = k+ x^+ - k- x^-."""
    return slope_plus * x if x >= 0.0 else slope_minus * x


def gk_inverse(s: float, slope_plus: float, slope_minus: float) -> float:
    return s / slope_plus if s >= 0.0 else s / slope_minus


def du_from_w(w: float, alpha: float) -> float:
    """u' = sign(w) |w|^(1/(1+alpha))."""
    if w == 0.0:
        return 0.0
    mag = abs(w) ** (1.0 / (1.0 + alpha))
    return mag if w > 0.0 else -mag


def eval_radial_F(r: float, du: float, ddu: float, spec: ProblemSpec) -> float:
    return ((spec.dimension - 1) / r * gk(du, spec.k_plus, spec.k_minus)
            + gk(ddu, spec.K_plus, spec.K_minus))


def pucci_envelopes(r: float, du: float, ddu: float, spec: ProblemSpec) -> tuple[float, float]:
    """(M-, M+) for a radial function: eigenvalues u'' (once) and u'/r (N-1 times)."""
    lam, Lam = spec.lambda_lo, spec.lambda_hi
    pos = max(ddu, 0.0) + (spec.dimension - 1) * max(du / r, 0.0)
    neg = max(-ddu, 0.0) + (spec.dimension - 1) * max(-du / r, 0.0)
    return lam * pos - Lam * neg, Lam * pos - lam * neg


def classify_case(du: float, ddu: float) -> CaseRegime:
    if du > 0.0 and ddu > 0.0:
        raise InvalidRegime(f"u'={du} > 0 and u''={ddu} > 0")
    if du >= 0.0 and ddu <= 0.0:
        return CaseRegime.CASE1
    if ddu <= 0.0:
        return CaseRegime.CASE2
    return CaseRegime.CASE3


class MomentumField:
    """Right-hand side (du/dr, dw/dr) with the problem constants unpacked once.

    Plain-float arithmetic: this is the innermost loop of every shot.
    """

    __slots__ = ("alpha", "p", "beta", "nm1", "kp", "km", "Kp", "Km", "one_alpha")

    def __init__(self, spec: ProblemSpec):
        self.alpha = float(spec.alpha)
        self.p = float(spec.p)
        self.one_alpha = 1.0 + self.alpha
        self.beta = 1.0 / self.one_alpha
        self.nm1 = float(spec.dimension - 1)
        self.kp, self.km = float(spec.k_plus), float(spec.k_minus)
        self.Kp, self.Km = float(spec.K_plus), float(spec.K_minus)

    def __call__(self, r: float, u: float, w: float) -> tuple[float, float]:
        # u is clamped: undershoot past the zero of u must not produce complex powers
        up = u ** self.p if u > 0.0 else 0.0
        if w > 0.0:
            du = w ** self.beta
            gw = self.kp * w
        elif w < 0.0:
            du = -((-w) ** self.beta)
            gw = self.km * w
        else:
            du = 0.0
            gw = 0.0
        s = -self.one_alpha * (up + self.nm1 * gw / r)
        dw = s / self.Kp if s >= 0.0 else s / self.Km
        return du, dw


def momentum_rhs(pt: PhasePoint, spec: ProblemSpec) -> tuple[float, float]:
    return MomentumField(spec)(pt.r, pt.u, pt.w)


def recover_ddu(pt: PhasePoint, dw: float, alpha: float) -> float:
    """u'' from w' = (1+alpha) |u'|^alpha u''."""
    if alpha == 0.0:
        return dw
    if pt.w == 0.0:
        raise DegenerateMomentum(f"w = 0 at r = {pt.r}")
    du = du_from_w(pt.w, alpha)
    return dw / ((1.0 + alpha) * abs(du) ** alpha)
