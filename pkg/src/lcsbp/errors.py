"""Error taxonomy shared by every module.

All failures raised by this package derive from :class:`LcsbpError`, so
callers can trap the library without catching unrelated exceptions.
"""

from __future__ import annotations


class LcsbpError(Exception):
    """Base class for all package errors."""


class NumericalFailure(LcsbpError):
    """A quadrature or root-finding step could not reach its target accuracy.

    Carries the best available estimate and the achieved error bound so a
    caller can decide whether the partial answer is still usable.
    """

    def __init__(self, message: str, estimate: float | None = None,
                 achieved: float | None = None):
        super().__init__(message)
        self.estimate = estimate
        self.achieved = achieved


class Indeterminate(LcsbpError):
    """A divergence test ran out of refinements without reaching a verdict.

    This is a first-class outcome, never silently coerced to finite or
    infinite; the CLI maps it to its own exit code.
    """

    def __init__(self, message: str, partial: float | None = None):
        super().__init__(message)
        self.partial = partial


class PreconditionViolation(LcsbpError):
    """An operation was called outside its regime of validity."""


class DomainError(LcsbpError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class StiffnessFailure(LcsbpError):
    """An ODE integration stalled or rejected too many steps."""


class GridExhausted(LcsbpError):
    """A simulation grid ended before the requested time span was covered."""


class InsufficientData(LcsbpError):
    """Too few effective samples to produce a meaningful estimate."""
