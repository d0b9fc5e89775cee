"""
SPRL logits binary codec.

Layout (little-endian): magic ``b"SPRL"``, u32 position count, then for every
position a u32 vocabulary size followed by that many float32 scores, in
flattened token order.
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from ..errors import ClipFormatError
from ..skeltoken import SlotLogits
from .atomic import PathLike, atomic_write_bytes

logger = logging.getLogger(__name__)

__all__ = ["MAGIC", "encode_logits", "decode_logits", "read_logits", "write_logits"]

MAGIC = b"SPRL"
_U32 = struct.Struct("<I")


def encode_logits(logits: SlotLogits) -> bytes:
    """Serialize scores (cast to float32); the position mask is not stored."""
    parts = [MAGIC, _U32.pack(len(logits.scores))]
    for scores in logits.scores:
        parts.append(_U32.pack(scores.size))
        parts.append(scores.astype("<f4").tobytes())
    return b"".join(parts)


def decode_logits(data: bytes) -> SlotLogits:
    """
    Parse an SPRL payload; every position is active.

    Raises:
        ClipFormatError: BAD_LOGITS_FILE on wrong magic, truncation or trailing bytes
    """
    if data[:4] != MAGIC:
        raise ClipFormatError("BAD_LOGITS_FILE", "missing SPRL magic")
    offset = 4
    try:
        (count,) = _U32.unpack_from(data, offset)
        offset += 4
        scores = []
        for i in range(count):
            (vocab,) = _U32.unpack_from(data, offset)
            offset += 4
            end = offset + 4 * vocab
            if end > len(data):
                raise ClipFormatError("BAD_LOGITS_FILE", f"position {i} truncated")
            scores.append(np.frombuffer(data[offset:end], dtype="<f4").astype(np.float64))
            offset = end
    except struct.error as e:
        raise ClipFormatError("BAD_LOGITS_FILE", f"truncated header: {e}") from e
    if offset != len(data):
        raise ClipFormatError("BAD_LOGITS_FILE", f"{len(data) - offset} trailing byte(s)")
    if not all(np.all(np.isfinite(s)) for s in scores):
        raise ClipFormatError("BAD_LOGITS_FILE", "scores must be finite")
    return SlotLogits(tuple(scores))


def read_logits(path: PathLike) -> SlotLogits:
    logits = decode_logits(Path(path).read_bytes())
    logger.debug(f"Read {len(logits)} logit position(s) from {path}")
    return logits


def write_logits(path: PathLike, logits: SlotLogits) -> Path:
    return atomic_write_bytes(path, encode_logits(logits))
