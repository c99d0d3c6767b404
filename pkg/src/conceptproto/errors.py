"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3.
"""


class ConceptProtoError(Exception):
    """Base class for package errors."""


class DataError(ConceptProtoError):
    """Malformed, missing, or inconsistent input data."""


class SchemaError(DataError):
    """A name or value that is not part of the configured schema."""


class NumericalError(ConceptProtoError):
    """Non-finite values or numerically invalid operations."""
