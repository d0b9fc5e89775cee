"""
Minimal Wavefront OBJ reader: ``v`` and ``f`` lines only.

Polygons are fan-triangulated; ``v/vt/vn`` references use the vertex part;
negative indices count back from the most recent vertex.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np

from ..errors import ClipFormatError
from .atomic import PathLike

logger = logging.getLogger(__name__)

__all__ = ["parse_obj", "read_obj"]


def _vertex_ref(token: str, n_vertices: int, line_no: int) -> int:
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError as e:
        raise ClipFormatError("BAD_OBJ_FILE", f"line {line_no}: bad face index {token!r}") from e
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx = n_vertices + idx
    else:
        raise ClipFormatError("BAD_OBJ_FILE", f"line {line_no}: face index 0 is invalid")
    if not 0 <= idx < n_vertices:
        raise ClipFormatError("BAD_OBJ_FILE", f"line {line_no}: face index {token!r} out of range")
    return idx


def parse_obj(text: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Parse OBJ text into (N_v, 3) vertices and (N_f, 3) 0-based triangles.

    Raises:
        ClipFormatError: BAD_OBJ_FILE
    """
    vertices: List[List[float]] = []
    faces: List[Tuple[int, int, int]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            try:
                vertices.append([float(x) for x in parts[1:4]])
            except ValueError as e:
                raise ClipFormatError("BAD_OBJ_FILE", f"line {line_no}: bad vertex") from e
            if len(vertices[-1]) != 3:
                raise ClipFormatError("BAD_OBJ_FILE", f"line {line_no}: vertex needs 3 coordinates")
        elif parts[0] == "f":
            refs = [_vertex_ref(tok, len(vertices), line_no) for tok in parts[1:]]
            if len(refs) < 3:
                raise ClipFormatError("BAD_OBJ_FILE", f"line {line_no}: face needs 3 vertices")
            for i in range(1, len(refs) - 1):
                faces.append((refs[0], refs[i], refs[i + 1]))
    V = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    F = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return V, F


def read_obj(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    V, F = parse_obj(Path(path).read_text(encoding="utf-8"))
    logger.debug(f"Read {V.shape[0]} vertices and {F.shape[0]} triangles from {path}")
    return V, F
