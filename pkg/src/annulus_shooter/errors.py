"""Exception hierarchy shared by the solver modules.

The CLI maps these onto exit codes: `InvalidParameter` -> 2,
`BracketNotFound` -> 3, every other `NumericalFailure` -> 4.
"""


class ShooterError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameter(ShooterError, ValueError):
    """A problem or solver parameter violates its admissibility constraint."""


class InvalidRegime(ShooterError):
    """u' > 0 and u'' > 0 at the same point; never happens on a true trajectory."""


class NumericalFailure(ShooterError):
    """Base class for failures of the numerical machinery."""


class DegenerateMomentum(NumericalFailure):
    """u'' requested at a point where the momentum w vanishes."""


class StepFailure(NumericalFailure):
    """The adaptive stepper could not meet the tolerance above h_min."""


class NoSignChange(NumericalFailure):
    """An event bracket does not contain a sign change."""


class QuadratureFailure(NumericalFailure):
    """A quadrature integrand produced non-finite values."""


class NonIntegrable(NumericalFailure):
    """The requested improper integral diverges."""


class PatchFailure(NumericalFailure):
    """The critical-point patch could not be built."""


class NoContraction(PatchFailure):
    """Picard iteration on the critical patch failed to contract after all retries."""


class BracketNotFound(NumericalFailure):
    """No gamma bracket with rho(gamma) = b was found in the scan range."""


class NotConverged(NumericalFailure):
    """An outer root solve did not converge."""
