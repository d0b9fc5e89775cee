"""
File formats: clip JSON, token streams, SPRL logits, OBJ meshes and sample dumps.
"""
from __future__ import annotations

from .atomic import atomic_write_bytes, atomic_write_text
from .clip_json import dumps_clip, loads_clip, read_clip, write_clip
from .logits_bin import read_logits, write_logits
from .obj_reader import read_obj
from .samples_csv import write_samples_csv
from .token_json import read_tokens, write_tokens

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "dumps_clip",
    "loads_clip",
    "read_clip",
    "write_clip",
    "read_logits",
    "write_logits",
    "read_obj",
    "write_samples_csv",
    "read_tokens",
    "write_tokens",
]
