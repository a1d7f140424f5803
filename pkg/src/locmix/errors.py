"""Exception types raised by locmix."""


class LocmixError(Exception):
    """Base class for all library errors."""


class DomainError(LocmixError, ValueError):
    """A mean parameter lies outside the family's mean domain."""


class SupportError(LocmixError, ValueError):
    """An observation is not a point of the family's support."""


class UnsupportedError(LocmixError, ValueError):
    """Requested order/degree or operation is not supported."""


class PositivityError(LocmixError, ValueError):
    """The model is not a proper density (outside the hard boundary)."""


class InfeasibleError(LocmixError, ValueError):
    """A feasibility problem (mean constraint, convex hull) has no solution."""


class AccuracyError(LocmixError, RuntimeError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class SingularityError(LocmixError, ValueError):
    """Likelihood evaluated at a point where some observed density is <= 0."""


class IterationLimitError(LocmixError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FitFailure(LocmixError, RuntimeError):
    """No usable inner solution was found during a profile fit."""
