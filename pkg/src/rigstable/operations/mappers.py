"""
Error mapping and CLI utilities.

Provides centralized exception-to-exit-code mapping and the command wrapper
that turns failures into an exit code plus a machine-readable error document
on stderr.
"""
from __future__ import annotations

import json
import logging
from typing import Any, Callable, Dict, TypeVar

import typer

logger = logging.getLogger(__name__)

T = TypeVar('T')

# 1 = data error, 2 = usage error
EXIT_CODES = {
    "RigError": 1,
    "ClipFormatError": 1,
    "DivergedError": 1,
    "ValidationError": 1,
    "JSONDecodeError": 1,
    "UnicodeDecodeError": 1,
    "ConfigError": 2,
    "ValueError": 2,
    "FileNotFoundError": 2,
    "IsADirectoryError": 2,
    "NotADirectoryError": 2,
}

_FALLBACK_CODES = {1: "DATA_ERROR", 2: "USAGE_ERROR"}


def exit_code_for(exc: BaseException) -> int:
    """
    Map exception to standardized exit code.

    Returns:
    - 1: Data errors (RigError family, malformed files) and unknown exceptions
    - 2: Usage errors (bad parameters, missing paths, invalid overrides)

    Args:
        exc: Exception to map

    Returns:
        Exit code (1 as fallback for unknown exceptions)
    """
    return EXIT_CODES.get(type(exc).__name__, 1)


def error_document(exc: BaseException) -> Dict[str, Any]:
    """``{"error": {...}}`` payload for ``exc``."""
    to_dict = getattr(exc, "to_dict", None)
    if callable(to_dict):
        body = to_dict()
    else:
        body = {
            "code": _FALLBACK_CODES[exit_code_for(exc)],
            "message": str(exc),
            "type": type(exc).__name__,
        }
    return {"error": body}


def run_and_exit(func: Callable[[], T]) -> T:
    """
    Unified error wrapper for CLI commands.

    Executes the given function and maps any exceptions to exit codes using
    typer.Exit, writing the error document to stderr first.

    Args:
        func: Function to execute

    Returns:
        Function result if successful

    Raises:
        typer.Exit: With appropriate exit code if function raises exception
    """
    try:
        return func()
    except typer.Exit:
        raise
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        typer.echo(json.dumps(error_document(e), sort_keys=True, default=str), err=True)
        raise typer.Exit(code=exit_code_for(e)) from e
