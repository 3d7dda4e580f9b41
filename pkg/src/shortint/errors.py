"""Error taxonomy shared across the package.

The CLI maps UsageError (and subclasses) to exit code 2 and
VerificationError to exit code 3; everything else is an internal error.
"""


class ShortintError(Exception):
    """Base class for package errors."""


class UsageError(ShortintError):
    """Invalid parameters, configuration, or preconditions."""


class CapacityError(UsageError):
    """Request exceeds a configured memory or size budget."""


class DomainError(UsageError):
    """Mathematically invalid input (e.g. a Mertens factor <= 0)."""


class AccuracyError(ShortintError):
    """A truncation or quadrature error estimate exceeds its budget."""


class EvaluationError(ShortintError):
    """A rule produced a non-finite value."""


class VerificationError(ShortintError):
    """An exact identity or oracle cross-check failed."""
