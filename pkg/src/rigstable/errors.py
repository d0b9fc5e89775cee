"""
Error types for rigstable.

Every data error carries a stable machine-readable ``code`` so that the CLI can
emit ``{"error": {"code": ..., "message": ...}}`` documents that scripts can
branch on without parsing prose.
"""
from __future__ import annotations

from typing import Any, Dict

__all__ = [
    "RigError",
    "ClipFormatError",
    "DivergedError",
    "ConfigError",
]


class RigError(Exception):
    """
    Base error for all rig data problems.

    Args:
        code: Stable error code (e.g. ``NONFINITE_COORDINATE``)
        message: Human-readable description
        **details: Extra context included in the error document
    """

    def __init__(self, code: str, message: str, **details: Any) -> None:
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details: Dict[str, Any] = dict(details)

    def to_dict(self) -> Dict[str, Any]:
        """Error document payload (the value under the ``error`` key)."""
        doc: Dict[str, Any] = {
            "code": self.code,
            "message": self.message,
            "type": type(self).__name__,
        }
        if self.details:
            doc["details"] = {k: self.details[k] for k in sorted(self.details)}
        return doc


class ClipFormatError(RigError):
    """Raised when an interchange file (clip JSON, SPRL logits, OBJ, CSV) is malformed."""


class DivergedError(RigError):
    """
    Raised when training produces a non-finite loss or gradient.

    The partial trace up to the failing step is kept on ``trace``.
    """

    def __init__(self, code: str, message: str, trace: Any = None, **details: Any) -> None:
        super().__init__(code, message, **details)
        self.trace = trace


class ConfigError(RigError, ValueError):
    """Raised for invalid generator configs and parameter override files (a usage error)."""
