"""
Core domain types: skeletons, mesh frames, animated rig clips.

All array fields are float64 (coordinates, weights) or int64 (indices) numpy
arrays that are made read-only on construction, so instances can be shared
between threads without copying.

Parent convention: ``parents[j] == 0`` marks a root, ``parents[j] == p > 0``
means joint ``j`` hangs off joint ``p - 1`` (1-based parent labels, 0-based
joint storage).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import RigError

__all__ = [
    "Skeleton",
    "MeshFrame",
    "RigClip",
    "JointTreeDistances",
    "Violation",
    "ValidationReport",
    "frozen_array",
]


def frozen_array(values: Any, dtype: Any = np.float64) -> np.ndarray:
    """Copy ``values`` into a new read-only array of ``dtype``."""
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Skeleton:
    """
    Joints plus parent vector.

    Construction only checks shapes; structural problems (cycles, bad parent
    labels, non-finite coordinates) are reported by ``rigcore.validate_clip``.
    """
    joints: np.ndarray
    parents: np.ndarray

    def __post_init__(self) -> None:
        joints = frozen_array(self.joints, np.float64)
        if joints.ndim == 1 and joints.size == 0:
            joints = frozen_array(np.zeros((0, 3)))
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise RigError("SHAPE_MISMATCH", f"joints must be J x 3, got shape {joints.shape}")
        parents = frozen_array(self.parents, np.int64)
        if parents.shape != (joints.shape[0],):
            raise RigError(
                "SHAPE_MISMATCH",
                f"parents must have one entry per joint ({joints.shape[0]}), got {parents.shape}",
            )
        if joints.shape[0] < 1:
            raise RigError("EMPTY_SKELETON", "skeleton needs at least one joint")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "parents", parents)

    @classmethod
    def from_self_parented(cls, joints: Any, parents: Sequence[int]) -> Skeleton:
        """Build a skeleton from parents where roots point at themselves (1-based)."""
        from .rigcore import normalize_parents
        return cls(joints=joints, parents=normalize_parents(parents))

    @property
    def joint_count(self) -> int:
        return int(self.joints.shape[0])

    def roots(self) -> List[int]:
        """0-based indices of root joints."""
        return [int(j) for j in np.flatnonzero(self.parents == 0)]

    def parent_index(self, j: int) -> Optional[int]:
        """0-based parent of joint ``j`` or None for roots."""
        p = int(self.parents[j])
        return None if p == 0 else p - 1

    def edges(self) -> np.ndarray:
        """
        Parent edges as an (E, 2) int array of (parent, child) 0-based pairs.

        Roots, self-parented joints and out-of-range labels contribute no edge.
        """
        J = self.joint_count
        child = np.arange(J)
        ok = (self.parents > 0) & (self.parents <= J) & (self.parents - 1 != child)
        pairs = np.stack([self.parents[ok] - 1, child[ok]], axis=1)
        return pairs.astype(np.int64).reshape(-1, 2)

    def with_joints(self, joints: Any) -> Skeleton:
        return Skeleton(joints=joints, parents=self.parents)


@dataclass(frozen=True, eq=False)
class MeshFrame:
    """Vertex positions of one frame; faces live on the clip."""
    vertices: np.ndarray

    def __post_init__(self) -> None:
        vertices = frozen_array(self.vertices, np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise RigError("SHAPE_MISMATCH", f"vertices must be N_v x 3, got shape {vertices.shape}")
        object.__setattr__(self, "vertices", vertices)

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])


@dataclass(frozen=True, eq=False)
class RigClip:
    """
    An animated rig sequence. Frame 0 is the anchor.

    Attributes:
        skeleton_frames: K+1 skeletons
        faces: shared (N_f, 3) 0-based triangle indices or None
        mesh_frames: K+1 mesh frames or None
        skin_weights: per-frame (N_v, J) weight matrices or None
        valid_mask: J booleans or None (all joints valid)
        clip_id: identifier used for seeding and report keys
        metadata: free-form provenance (normalization transform, generator config)
    """
    skeleton_frames: Tuple[Skeleton, ...]
    faces: Optional[np.ndarray] = None
    mesh_frames: Optional[Tuple[MeshFrame, ...]] = None
    skin_weights: Optional[Tuple[np.ndarray, ...]] = None
    valid_mask: Optional[np.ndarray] = None
    clip_id: str = "clip"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frames = tuple(self.skeleton_frames)
        if not frames:
            raise RigError("EMPTY_CLIP", "clip needs at least the anchor frame")
        object.__setattr__(self, "skeleton_frames", frames)
        if self.faces is not None:
            faces = frozen_array(self.faces, np.int64)
            if faces.size == 0:
                faces = frozen_array(np.zeros((0, 3)), np.int64)
            if faces.ndim != 2 or faces.shape[1] != 3:
                raise RigError("SHAPE_MISMATCH", f"faces must be N_f x 3, got shape {faces.shape}")
            object.__setattr__(self, "faces", faces)
        if self.mesh_frames is not None:
            object.__setattr__(self, "mesh_frames", tuple(self.mesh_frames))
        if self.skin_weights is not None:
            object.__setattr__(
                self, "skin_weights", tuple(frozen_array(w, np.float64) for w in self.skin_weights)
            )
        if self.valid_mask is not None:
            object.__setattr__(self, "valid_mask", frozen_array(self.valid_mask, bool))

    @property
    def anchor(self) -> Skeleton:
        return self.skeleton_frames[0]

    @property
    def frame_count(self) -> int:
        return len(self.skeleton_frames)

    @property
    def has_mesh(self) -> bool:
        return self.mesh_frames is not None and self.faces is not None

    def valid_joints(self) -> np.ndarray:
        """Valid-joint mask, defaulting to all anchor joints."""
        if self.valid_mask is not None:
            return self.valid_mask
        return frozen_array(np.ones(self.anchor.joint_count), bool)

    def vertex_stack(self) -> np.ndarray:
        """(K+1, N_v, 3) vertex positions."""
        if self.mesh_frames is None:
            raise RigError("NO_MESH", f"clip {self.clip_id!r} has no mesh frames")
        return np.stack([m.vertices for m in self.mesh_frames])

    def replace(self, **changes: Any) -> RigClip:
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class JointTreeDistances:
    """
    Hop counts on the joint tree.

    Pairs in different components of a multi-root forest hold ``sentinel``.
    """
    D: np.ndarray
    multi_root: bool = False
    sentinel: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "D", frozen_array(self.D, np.int64))


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validation."""
    code: str
    message: str
    frame: Optional[int] = None
    severity: str = "error"


@dataclass(frozen=True)
class ValidationReport:
    """Result of ``validate_clip``; empty means valid."""
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        """True when no error-severity violation is present."""
        return not any(v.severity == "error" for v in self.violations)

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def __len__(self) -> int:
        return len(self.violations)

    def __bool__(self) -> bool:
        return bool(self.violations)
