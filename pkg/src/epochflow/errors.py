"""Exception hierarchy shared by every engine module.

All engine failures derive from :class:`EngineError` so that service layers
can map them onto transport error codes in one place.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all errors raised by the analytics engine."""


class ValidationError(EngineError):
    """A domain invariant was violated while constructing a value."""


class ParseError(EngineError):
    """Run document text could not be parsed at all."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


class SchemaError(EngineError):
    """A parsed run document has the wrong shape or inconsistent fields."""

    def __init__(self, message: str, *, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class StorageError(EngineError):
    """The run store could not read or write its backing files."""


class NotFoundError(EngineError):
    """No stored run exists under the requested id."""


class UnknownInstanceError(EngineError):
    """An instance id does not exist in the run it was queried against."""


class InvalidTransitionError(EngineError):
    """A flow-band lookup referenced an epoch transition outside the range."""


class InvalidRegexError(EngineError):
    """A sequence filter pattern is not a valid regular expression."""


class UnknownAttributeError(EngineError):
    """A table request referenced an attribute the engine does not expose."""


class InvalidWeightsError(EngineError):
    """Combined-ranking weights were negative or all zero."""
