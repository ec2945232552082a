"""Exception hierarchy shared across the package.

ValidationError (and subclasses) mean the caller handed us bad data or
configuration; the CLI maps these to exit code 2. Everything else is an
internal failure (exit code 1).
"""


class AdpmError(Exception):
    """Base class for all package errors."""


class ValidationError(AdpmError):
    """Input data or configuration violates a documented precondition."""


class FormatError(ValidationError):
    """A byte stream does not follow the tensor container format."""


class TensorIOError(AdpmError):
    """Reading or writing a tensor container failed part-way through."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class UnsupportedSizeError(ValidationError):
    """A pooling grid was requested on a map smaller than the grid."""


class InsufficientDataError(ValidationError):
    """Too few descriptors to fit the requested vocabulary."""


class DegenerateDataError(ValidationError):
    """Clustering input collapses (e.g. all rows identical)."""


class SkipPairError(ValidationError):
    """A one-vs-one class pair has no samples for one of its classes."""
