"""
Standardized error hierarchy for the cross-view relation network.
"""

from typing import Any, Dict, Optional, Sequence


class CVRError(Exception):
    """Base exception for all errors raised by this package."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.message = message
        self.context = context or {}
        super().__init__(message)


class ShapeError(CVRError):
    """Dimension mismatch between operands."""

    def __init__(self, message: str, expected: Optional[Sequence[int]] = None,
                 actual: Optional[Sequence[int]] = None,
                 context: Optional[Dict[str, Any]] = None):
        self.expected = tuple(expected) if expected is not None else None
        self.actual = tuple(actual) if actual is not None else None
        if expected is not None or actual is not None:
            message = f"{message} (expected {self.expected}, got {self.actual})"
        super().__init__(message, context)


class DomainError(CVRError):
    """Input outside the domain of an operation (bad geometry, mixed views, empty views)."""
    pass


class ConfigurationError(CVRError):
    """Configuration validation or loading error."""

    def __init__(self, message: str, field: Optional[str] = None,
                 context: Optional[Dict[str, Any]] = None):
        self.field = field
        if field:
            formatted_message = f"Configuration error for '{field}': {message}"
        else:
            formatted_message = f"Configuration error: {message}"
        super().__init__(formatted_message, context)


class ValidationError(ConfigurationError, ValueError):
    """A single configuration value failed validation.

    Also a ``ValueError`` so pydantic validators can raise it and still get
    the failing field reported in the wrapped validation error.
    """
    pass


class CVRIOError(CVRError):
    """File system failure, always carrying the offending path."""

    def __init__(self, path: str, message: str, original_error: Optional[Exception] = None):
        self.path = str(path)
        self.original_error = original_error
        super().__init__(f"{self.path}: {message}", {"path": self.path})


class DatasetFormatError(CVRIOError):
    """Malformed record in a dataset file."""

    def __init__(self, path: str, line: int, message: str):
        self.line = line
        super().__init__(path, f"line {line}: {message}")


class DatasetSchemaError(CVRError):
    """Records parse but their dimensions are inconsistent."""
    pass


class NumericalError(CVRError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message: str, step: Optional[int] = None,
                 context: Optional[Dict[str, Any]] = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message, context)


class CheckpointError(CVRError):
    """Checkpoint unreadable, from an unknown version, or incompatible with the data."""

    def __init__(self, message: str, path: Optional[str] = None,
                 context: Optional[Dict[str, Any]] = None):
        self.path = str(path) if path is not None else None
        if path is not None:
            message = f"{self.path}: {message}"
        super().__init__(message, context)


class CheckpointMismatchError(CheckpointError):
    """Checkpoint dimensions disagree with the data it is applied to."""
    pass
