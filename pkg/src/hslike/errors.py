"""Exception types shared across the package."""


class HsLikeError(Exception):
    """Base class for all package errors."""


class DomainError(HsLikeError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class NumericalError(HsLikeError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable result.

    Parameters
    ----------
    message : str
        Human readable description.
    estimate : optional
        Best value available when the failure was detected (for example the
        partial quadrature estimate).
    trace : optional
        Iteration history up to the failure.
    """

    def __init__(self, message, estimate=None, trace=None):
        super().__init__(message)
        self.estimate = estimate
        self.trace = trace


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""


class SingularSystemError(NumericalError):
    """A linear system that should be positive definite was singular."""


class DegenerateStateError(NumericalError):
    """The sampler reached a state where a conditional is improper."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before meeting its tolerance."""
