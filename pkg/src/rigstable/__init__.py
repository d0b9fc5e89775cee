"""
rigstable - temporal rig-consistency toolkit.

Skeleton token codec and consistency losses, masked skinning distillation
losses, permutation-invariant temporal stability metrics, a synthetic
articulated clip generator and a toy skinning fine-tuning demo.
"""
from __future__ import annotations

from .errors import ClipFormatError, ConfigError, DivergedError, RigError
from .rig_types import MeshFrame, RigClip, Skeleton

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "RigError",
    "ClipFormatError",
    "ConfigError",
    "DivergedError",
    "Skeleton",
    "MeshFrame",
    "RigClip",
]
