"""Exception hierarchy.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``BackendError`` -> 3.
"""

from __future__ import annotations


class MarkerConfError(Exception):
    """Base class for all package errors."""


class ConfigError(MarkerConfError):
    pass


class DataError(MarkerConfError):
    pass


class CorpusParseError(DataError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class CorpusReferenceError(DataError):
    pass


class CorpusValidationError(DataError):
    pass


class InsufficientDataError(DataError, ValueError):
    """Raised when a statistic or metric has too few eligible inputs."""


class UndefinedStatisticError(DataError, ValueError):
    """Raised for degenerate inputs, e.g. zero mean in a CV or zero variance in a correlation."""


class BackendError(MarkerConfError):
    pass


class TransportError(BackendError):
    """A retryable failure talking to a model endpoint."""


class JudgeError(BackendError):
    """A judge call failed after exhausting retries."""


class JudgeParseError(MarkerConfError):
    """The judge replied, but the reply could not be parsed for its task kind."""

    def __init__(self, kind: str, raw_text: str, message: str = ""):
        super().__init__(message or f"unparseable {kind} reply: {raw_text!r}")
        self.kind = kind
        self.raw_text = raw_text


class AnnotationFailureError(BackendError):
    """Too many sentences failed annotation; carries the partial result."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
