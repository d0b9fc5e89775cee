"""
Atomic file writes.

Output goes to a temporary file in the destination directory and is renamed
into place, so readers never see a partially written report or clip.
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Union

PathLike = Union[str, os.PathLike]


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """
    Write ``data`` to ``path`` atomically.

    Args:
        path: Destination file (parent directories are created)
        data: Bytes to write

    Returns:
        Resolved destination path

    Raises:
        OSError: If the write or rename fails (the temp file is removed)
    """
    out_path = Path(path).resolve()
    out_path.parent.mkdir(parents=True, exist_ok=True)

    temp_fd = None
    temp_path = None
    try:
        temp_fd, temp_path = tempfile.mkstemp(
            suffix=".tmp",
            dir=out_path.parent,
            prefix=out_path.name + ".",
        )
        with os.fdopen(temp_fd, "wb") as f:
            temp_fd = None
            f.write(data)
        os.replace(temp_path, out_path)
        temp_path = None
    except Exception:
        if temp_fd is not None:
            try:
                os.close(temp_fd)
            except OSError:
                pass
        if temp_path is not None and os.path.exists(temp_path):
            try:
                os.unlink(temp_path)
            except OSError:
                pass
        raise
    return out_path


def atomic_write_text(path: PathLike, text: str) -> Path:
    """UTF-8 text variant of ``atomic_write_bytes`` (newlines written as ``\\n``)."""
    return atomic_write_bytes(path, text.encode("utf-8"))
