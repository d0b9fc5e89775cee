"""Token stream files written by ``tokenize`` and read by ``detokenize``."""
from __future__ import annotations

import json
from pathlib import Path
from typing import List

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import ClipFormatError
from ..skeltoken import TokenSequence
from .atomic import PathLike, atomic_write_text

__all__ = ["TokenDocument", "read_tokens", "write_tokens"]


class TokenDocument(BaseModel):
    """Flattened token streams of every frame of a clip."""
    model_config = ConfigDict(extra="forbid")

    clip_id: str = Field(..., description="Source clip identifier")
    n_disc: int = Field(..., ge=2, description="Coordinate bins")
    frames: List[List[int]] = Field(..., description="Per-frame flattened tokens (4 per joint)")

    def sequences(self) -> List[TokenSequence]:
        return [TokenSequence.from_flat(f, self.n_disc) for f in self.frames]


def write_tokens(path: PathLike, clip_id: str, sequences: List[TokenSequence]) -> Path:
    n_disc = sequences[0].n_disc if sequences else 2
    doc = TokenDocument(clip_id=clip_id, n_disc=n_disc, frames=[s.flat().tolist() for s in sequences])
    return atomic_write_text(path, json.dumps(doc.model_dump(), sort_keys=True, separators=(",", ":")) + "\n")


def read_tokens(path: PathLike) -> TokenDocument:
    """
    Raises:
        ClipFormatError: BAD_TOKEN_FILE
    """
    p = Path(path)
    try:
        return TokenDocument.model_validate_json(p.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ClipFormatError("BAD_TOKEN_FILE", f"{p}: {e}") from e
