"""
RigClip JSON interchange.

The document is a single UTF-8 JSON object::

    {"clip_id": str,
     "frames": [{"joints": [[x, y, z], ...], "parents": [int, ...]}, ...],
     "faces": [[i, j, k], ...] | null,
     "mesh_frames": [{"vertices": [[x, y, z], ...]}, ...] | null,
     "skin_weights": [[[w, ...], ...], ...] | null,
     "valid_mask": [bool, ...] | null}

An optional ``metadata`` object carries provenance (normalization, generator
settings). Any other top-level key is dropped with a warning. Self-parented
roots are converted to the 0-root convention on load.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import ClipFormatError
from ..rig_types import MeshFrame, RigClip, Skeleton
from ..rigcore import normalize_parents
from .atomic import PathLike, atomic_write_text

logger = logging.getLogger(__name__)

__all__ = [
    "FrameDocument",
    "MeshFrameDocument",
    "ClipDocument",
    "clip_from_document",
    "clip_to_document",
    "loads_clip",
    "dumps_clip",
    "read_clip",
    "write_clip",
]


class FrameDocument(BaseModel):
    """One skeleton frame."""
    model_config = ConfigDict(extra="forbid")

    joints: List[List[float]] = Field(..., description="J x 3 joint positions")
    parents: List[int] = Field(..., description="1-based parent labels, 0 for roots")


class MeshFrameDocument(BaseModel):
    """One mesh frame."""
    model_config = ConfigDict(extra="forbid")

    vertices: List[List[float]] = Field(..., description="N_v x 3 vertex positions")


class ClipDocument(BaseModel):
    """Wire form of a RigClip."""
    model_config = ConfigDict(extra="ignore")

    clip_id: str = Field(..., description="Clip identifier (report key and seed salt)")
    frames: List[FrameDocument] = Field(..., description="Skeleton frames; frame 0 is the anchor")
    faces: Optional[List[List[int]]] = Field(default=None, description="Shared 0-based triangles")
    mesh_frames: Optional[List[MeshFrameDocument]] = Field(default=None, description="Per-frame mesh vertices")
    skin_weights: Optional[List[List[List[float]]]] = Field(
        default=None, description="Per-frame N_v x J skinning weights"
    )
    valid_mask: Optional[List[bool]] = Field(default=None, description="Valid-joint mask")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="Provenance")


_KNOWN_KEYS = frozenset(ClipDocument.model_fields)


def clip_from_document(doc: ClipDocument) -> RigClip:
    """
    Build a RigClip from a parsed document.

    Raises:
        ClipFormatError: BAD_CLIP_FILE when arrays have the wrong shape
    """
    try:
        frames = tuple(
            Skeleton(joints=f.joints if f.joints else [], parents=normalize_parents(f.parents))
            for f in doc.frames
        )
        meshes = None
        if doc.mesh_frames is not None:
            meshes = tuple(MeshFrame(m.vertices if m.vertices else []) for m in doc.mesh_frames)
        return RigClip(
            skeleton_frames=frames,
            faces=doc.faces,
            mesh_frames=meshes,
            skin_weights=None if doc.skin_weights is None else tuple(doc.skin_weights),
            valid_mask=doc.valid_mask,
            clip_id=doc.clip_id,
            metadata=dict(doc.metadata),
        )
    except ClipFormatError:
        raise
    except Exception as e:
        code = getattr(e, "code", "BAD_CLIP_FILE")
        raise ClipFormatError(code, f"clip {doc.clip_id!r}: {getattr(e, 'message', e)}") from e


def _rows(arr: Any) -> List[Any]:
    return arr.tolist()


def clip_to_document(clip: RigClip) -> ClipDocument:
    return ClipDocument(
        clip_id=clip.clip_id,
        frames=[FrameDocument(joints=_rows(s.joints), parents=_rows(s.parents)) for s in clip.skeleton_frames],
        faces=None if clip.faces is None else _rows(clip.faces),
        mesh_frames=None if clip.mesh_frames is None else [
            MeshFrameDocument(vertices=_rows(m.vertices)) for m in clip.mesh_frames
        ],
        skin_weights=None if clip.skin_weights is None else [_rows(w) for w in clip.skin_weights],
        valid_mask=None if clip.valid_mask is None else _rows(clip.valid_mask),
        metadata=dict(clip.metadata),
    )


def loads_clip(text: str, source: str = "<string>") -> RigClip:
    """
    Parse clip JSON text.

    Raises:
        ClipFormatError: BAD_CLIP_FILE on malformed JSON or schema violations
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ClipFormatError("BAD_CLIP_FILE", f"{source}: invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ClipFormatError("BAD_CLIP_FILE", f"{source}: top level must be an object")
    unknown = sorted(set(raw) - _KNOWN_KEYS)
    if unknown:
        logger.warning(f"{source}: ignoring unknown top-level key(s) {unknown}")
    try:
        doc = ClipDocument.model_validate(raw)
    except ValidationError as e:
        raise ClipFormatError("BAD_CLIP_FILE", f"{source}: {e.error_count()} schema error(s): {e}") from e
    return clip_from_document(doc)


def dumps_clip(clip: RigClip) -> str:
    """
    Canonical clip JSON.

    Floats use Python's shortest round-trip repr (17 significant digits at
    most), so a write/read cycle reproduces every coordinate exactly.
    """
    payload = clip_to_document(clip).model_dump(mode="python")
    if not payload["metadata"]:
        del payload["metadata"]
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def read_clip(path: PathLike) -> RigClip:
    p = Path(path)
    clip = loads_clip(p.read_text(encoding="utf-8"), source=str(p))
    logger.debug(f"Read clip {clip.clip_id!r} ({clip.frame_count} frames) from {p}")
    return clip


def write_clip(path: PathLike, clip: RigClip) -> Path:
    return atomic_write_text(path, dumps_clip(clip))
