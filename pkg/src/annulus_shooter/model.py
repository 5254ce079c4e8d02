"""Problem parameters, solver controls and the constants derived from them.

Everything here is an immutable value object. `validate_spec` is the single
gate every other module relies on: it either returns the derived constants
or raises `InvalidParameter` naming the violated inequality.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from .errors import InvalidParameter

__all__ = [
    "ProblemSpec",
    "DerivedConstants",
    "SolverControls",
    "DEFAULT_CONTROLS",
    "validate_spec",
    "draw_spec",
]


@dataclass(frozen=True)
class ProblemSpec:
    """Equation -|u'|^alpha F(r, u', u'') = |u|^(p-1) u on the annulus a < r < b.

    F is the piecewise-linear radial operator

        F = (N-1)/r (k+ (u')^+ - k- (u')^-) + K+ (u'')^+ - K- (u'')^-

    and `lambda_lo`, `lambda_hi` are the ellipticity constants that bracket
    every slope.
    """

    dimension: int
    alpha: float
    p: float
    lambda_lo: float
    lambda_hi: float
    k_plus: float
    k_minus: float
    K_plus: float
    K_minus: float
    a: float
    b: float

    @classmethod
    def symmetric(cls, dimension: int = 3, alpha: float = 0.0, p: float = 3.0,
                  a: float = 1.0, b: float = 2.0, c: float = 1.0) -> "ProblemSpec":
        """All ellipticity constants equal to `c` (F = c * Laplacian)."""
        return cls(dimension, alpha, p, c, c, c, c, c, c, a, b)

    def reflected(self) -> "ProblemSpec":
        """Spec of G(M) = -F(-M): the (kK) class maps to itself with +/- slopes swapped."""
        return dataclasses.replace(self, k_plus=self.k_minus, k_minus=self.k_plus,
                                   K_plus=self.K_minus, K_minus=self.K_plus)

    @property
    def is_symmetric(self) -> bool:
        return self.k_plus == self.k_minus and self.K_plus == self.K_minus

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParameter(f"unknown problem keys: {sorted(unknown)}")
        missing = names - set(data)
        if missing:
            raise InvalidParameter(f"missing problem keys: {sorted(missing)}")
        return cls(**data)


@dataclass(frozen=True)
class DerivedConstants:
    """Dimension-like constants used by the energies, the patch and the flags.

    `p_tilde_minus` is None when n_minus <= 2 (the threshold is undefined there).
    """

    n_minus: float
    n_plus: float
    N_k: float
    p_tilde_minus: Optional[float]


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise InvalidParameter(message)


def validate_spec(spec: ProblemSpec) -> DerivedConstants:
    """Check every admissibility constraint and return the derived constants."""
    fields = dataclasses.asdict(spec)
    for name, value in fields.items():
        try:
            finite = math.isfinite(float(value))
        except (TypeError, ValueError):
            raise InvalidParameter(f"{name} is not a real number: {value!r}") from None
        _require(finite, f"{name} is not finite")

    N = spec.dimension
    _require(float(N).is_integer(), "dimension N must be an integer")
    _require(N >= 2, "N < 2")
    _require(spec.alpha > -1.0, "alpha <= -1")
    _require(spec.p > 1.0 + spec.alpha, "p <= 1+alpha")
    _require(spec.lambda_lo > 0.0, "lambda <= 0")
    for sign in ("plus", "minus"):
        k = getattr(spec, f"k_{sign}")
        K = getattr(spec, f"K_{sign}")
        _require(spec.lambda_lo <= k, f"k_{sign} < lambda")
        _require(k <= K, f"K_{sign} < k_{sign}")
        _require(K <= spec.lambda_hi, f"Lambda < K_{sign}")
    _require(spec.a > 0.0, "a <= 0")
    _require(spec.a < spec.b, "b <= a")

    lam, Lam = spec.lambda_lo, spec.lambda_hi
    n_minus = Lam * (N - 1) / lam + 1.0
    n_plus = lam * (N - 1) / Lam + 1.0
    N_k = (N - 1) * spec.k_minus / spec.K_minus
    p_tilde = None
    if n_minus > 2.0:
        p_tilde = (n_minus * (1.0 + spec.alpha) - spec.alpha) / (n_minus - 2.0)
    return DerivedConstants(n_minus=n_minus, n_plus=n_plus, N_k=N_k, p_tilde_minus=p_tilde)


@dataclass(frozen=True)
class SolverControls:
    """Numerical knobs. None of these come from the mathematics.

    `r_max=None` means 100*b. `scan_points` is the number of log-spaced
    gammas in the bracketing scan over [gamma_min, gamma_max]. The bracket is
    bisected with (rel_tol, abs_tol); the returned solution is then re-solved
    with (final_rel_tol, final_abs_tol) starting from that bracket.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    h_init: float = 1e-3
    h_min: float = 1e-14
    h_max: float = 1.0
    r_max: Optional[float] = None
    w_switch: float = 1e-6
    bisect_tol: float = 1e-10
    gamma_min: float = 1e-2
    gamma_max: float = 1e4
    scan_points: int = 25
    max_picard_iters: int = 60
    picard_tol: float = 1e-12
    max_steps: int = 200_000
    max_bisect_iters: int = 200
    final_rel_tol: float = 1e-14
    final_abs_tol: float = 1e-16

    def tightened(self) -> "SolverControls":
        """Controls for the final re-integration of a solution."""
        return dataclasses.replace(self, rel_tol=min(self.rel_tol, self.final_rel_tol),
                                   abs_tol=min(self.abs_tol, self.final_abs_tol))

    def validate(self, spec: Optional[ProblemSpec] = None) -> None:
        for name in ("rel_tol", "abs_tol", "w_switch", "bisect_tol", "picard_tol",
                     "gamma_min", "h_min", "final_rel_tol", "final_abs_tol"):
            _require(getattr(self, name) > 0.0, f"{name} <= 0")
        _require(self.h_min < self.h_init < self.h_max, "need h_min < h_init < h_max")
        _require(self.gamma_min < self.gamma_max, "gamma_max <= gamma_min")
        _require(self.scan_points >= 2, "scan_points < 2")
        _require(self.max_picard_iters >= 1, "max_picard_iters < 1")
        if spec is not None:
            _require(self.resolved_r_max(spec) > spec.b, "r_max <= b")

    def resolved_r_max(self, spec: ProblemSpec) -> float:
        return 100.0 * spec.b if self.r_max is None else float(self.r_max)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverControls":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParameter(f"unknown solver keys: {sorted(unknown)}")
        return cls(**data)


DEFAULT_CONTROLS = SolverControls()


def draw_spec(rng, alpha_range=(-0.5, 2.0), p_span=3.0, const_range=(0.5, 3.0),
              dimensions=(2, 3, 4, 5), a: float = 1.0, b: float = 2.0) -> ProblemSpec:
    """Random admissible spec: lambda <= k+/- <= K+/- <= Lambda inside `const_range`.

    p is drawn from (1+alpha, 1+alpha+p_span]. `rng` is a numpy Generator.
    """
    alpha = float(rng.uniform(*alpha_range))
    p = 1.0 + alpha + p_span * float(1.0 - rng.uniform(0.0, 1.0))  # (0, p_span]
    lam, Lam = sorted(float(x) for x in rng.uniform(*const_range, size=2))
    kp, Kp = sorted(float(x) for x in rng.uniform(lam, Lam, size=2))
    km, Km = sorted(float(x) for x in rng.uniform(lam, Lam, size=2))
    N = int(rng.choice(dimensions))
    return ProblemSpec(N, alpha, p, lam, Lam, kp, km, Kp, Km, a, b)
