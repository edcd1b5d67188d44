"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for bad inputs
(CLI exit code 2) and :class:`NumericalError` for failures of the numerics
on otherwise valid inputs (CLI exit code 3).
"""

from __future__ import annotations


class CCCError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CCCError, ValueError):
    """Input does not satisfy a documented schema or invariant."""


class InvalidScaleError(ValidationError):
    """A scale function is not strictly increasing or otherwise malformed."""


class DomainError(ValidationError):
    """Evaluation requested outside the declared domain of a function."""


class ExtrapolationError(DomainError):
    """Tabulated data evaluated off its grid."""


class PreconditionError(ValidationError):
    """An operation was called on arguments violating its precondition."""


class NumericalError(CCCError, ArithmeticError):
    """A numerical procedure failed on valid input."""


class NotFactorizableError(NumericalError):
    """The concave-factor integral diverges at the current resolution."""


class ZeroDerivativeError(NumericalError):
    """A derivative vanished where a logarithmic derivative was needed."""

    def __init__(self, message: str, location: float | None = None):
        super().__init__(message)
        self.location = location


class TabulationDomainError(NumericalError):
    """An argument fell beyond the tabulated range of a factor.

    ``required`` is the smallest upper end of the tabulation that would have
    covered the request.
    """

    def __init__(self, message: str, required: float | None = None):
        super().__init__(message)
        self.required = required


class DivergenceError(NumericalError):
    """A gauge bracket could not be found (the modular never drops to 1)."""
