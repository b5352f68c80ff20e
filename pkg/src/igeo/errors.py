"""Exception hierarchy. Every error raised on purpose by the package derives from IGeoError."""

from __future__ import annotations


class IGeoError(Exception):
    """Base class for all package errors."""


class DomainError(IGeoError, ValueError):
    """A parameter point lies outside the family's valid domain."""


class NonConvergent(IGeoError, ArithmeticError):
    """Quadrature refinement failed to agree with the coarse rule."""


class UnknownFamily(IGeoError, KeyError):
    """Requested builtin family does not exist."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class DegenerateStatistics(IGeoError, ValueError):
    """Sufficient statistics are empty or linearly dependent on the sample space."""


class NormalizationFailure(IGeoError, ArithmeticError):
    """A family could not be normalized to unit mass."""


class NegativeDensity(IGeoError, ValueError):
    """A mixture density goes negative somewhere on its declared domain."""

    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


class InvalidOrder(IGeoError, ValueError):
    """Divergence or geometry order outside its admissible set."""


class IntegralNonPositive(IGeoError, ArithmeticError):
    """The inner integral of a log-type divergence came out non-positive."""


class StepTooLarge(IGeoError, ValueError):
    """A finite-difference stencil would leave the parameter domain."""


class NotPositiveDefinite(IGeoError, ArithmeticError):
    """A metric tensor failed its Cholesky factorization."""


class StructureMismatch(IGeoError, ValueError):
    """Requested closed form does not apply to the family's flat chart."""


class PathExitsDomain(IGeoError, ValueError):
    """A reconstruction path leaves the parameter domain."""


class NonClosedField(IGeoError, ArithmeticError):
    """A log-derivative field is not closed, so it has no potential."""


class ConsistencyError(IGeoError, AssertionError):
    """Two independent computations of the same quantity disagree."""
