"""Exception hierarchy.

Validation problems (bad input files, bad configuration) derive from
``ValidationError``; failures of the numerics on otherwise valid input derive
from ``NumericError``.  The CLI maps the two families to exit codes 1 and 2.
"""


class SegscaError(Exception):
    """Base class for all package errors."""


class ValidationError(SegscaError, ValueError):
    """Input data violates a documented contract."""


class SchemaError(ValidationError):
    """A required column is missing from an input table."""

    def __init__(self, column, path=None):
        self.column = column
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing required column {column!r}{where}")


class ConfigError(ValidationError):
    """Invalid generator, smoothing or run configuration."""


class CatalogError(ValidationError):
    """Malformed variable catalog."""


class NumericError(SegscaError, ArithmeticError):
    """A quantity is undefined for the given (valid) data."""


class DegenerateCompositionError(NumericError):
    """Index undefined because fewer than two groups are present."""


class EmptyGroupError(NumericError):
    """The focal group has zero population."""


class DegenerateZoneError(NumericError):
    """A source zone holds population but no positive allocation weight."""


class RankDeficiencyError(NumericError):
    """Design matrix does not have full column rank."""

    def __init__(self, message, column=None):
        self.column = column
        super().__init__(message)


class UndefinedCorrelationError(NumericError):
    """Correlation requested for a zero-variance vector."""
