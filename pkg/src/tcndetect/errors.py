"""Exception hierarchy shared across the toolkit.

The three branches map onto the CLI exit codes: configuration problems
(exit 2), data problems (exit 3), and numeric failures (exit 4).
"""

from __future__ import annotations


class TcndetectError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TcndetectError):
    """Invalid configuration value or combination."""


class DataError(TcndetectError):
    """Input data violates a contract (schema, parse, emptiness)."""


class SchemaError(DataError):
    """Column set or channel naming does not match the expected schema."""


class ParseError(DataError):
    """A cell could not be parsed as a number."""


class EmptyDataError(DataError):
    """An operation produced or received an empty dataset."""


class NumericError(TcndetectError):
    """A numerical procedure failed or diverged."""


class SingularCovarianceError(NumericError):
    """Covariance factorization failed even after regularization."""


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss."""
