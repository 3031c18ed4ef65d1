"""
Structured error hierarchy for hsprior.

Every error carries a ``field`` naming the dimension, header key, config key
or parameter that caused it, so callers (and tests) can react without parsing
messages.
"""
from typing import Any, Optional


class HSPriorError(Exception):
    """
    Base class for all errors raised by the restoration toolkit.

    Args:
        message: Human readable one-line description
        field: Name of the offending dimension, key or parameter
    """

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.field = field

    def __str__(self) -> str:
        if self.field:
            return f"{self.message} [{self.field}]"
        return self.message


class ShapeMismatchError(HSPriorError, ValueError):
    """Two arrays disagree on an extent."""

    def __init__(self, message: str, field: Optional[str] = None,
                 expected: Any = None, actual: Any = None):
        super().__init__(message, field)
        self.expected = expected
        self.actual = actual


class GraphError(HSPriorError):
    """Malformed computation graph or misuse of the tape."""


class ArchitectureError(HSPriorError, ValueError):
    """An ArchSpec cannot be realised for the given input shape."""


class IllPosedProblemError(HSPriorError, ValueError):
    """The restoration job has no constraint to fit (e.g. an all-zero mask)."""


class NonFiniteError(HSPriorError, ArithmeticError):
    """A NaN or Inf appeared where only finite reals are allowed."""


class CubeFormatError(HSPriorError):
    """A cube or mask file is malformed."""


class ConfigError(HSPriorError, ValueError):
    """Invalid run configuration, CLI flags or settings."""
