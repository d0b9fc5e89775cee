"""Random skeletons, rotations and rigidly moved clips for property tests."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from rigstable.rig_types import RigClip, Skeleton


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform proper rotation from the QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_tree_parents(rng: np.random.Generator, joint_count: int) -> np.ndarray:
    """Random single-root tree: joint j > 0 hangs off a lower-numbered joint."""
    parents = np.zeros(joint_count, dtype=np.int64)
    for j in range(1, joint_count):
        parents[j] = rng.integers(0, j) + 1
    return parents


def random_skeleton(rng: np.random.Generator, joint_count: int, scale: float = 0.3) -> Skeleton:
    return Skeleton(rng.uniform(-scale, scale, size=(joint_count, 3)), random_tree_parents(rng, joint_count))


def rigid_copy(skeleton: Skeleton, rotation: np.ndarray, translation: Sequence[float]) -> Skeleton:
    return skeleton.with_joints(skeleton.joints @ np.asarray(rotation).T + np.asarray(translation))


def rigid_clip(rng: np.random.Generator, joint_count: int, frames: int = 3, clip_id: str = "rigid") -> RigClip:
    """Clip whose every frame is a random rigid motion of the anchor."""
    anchor = random_skeleton(rng, joint_count)
    moved = [rigid_copy(anchor, random_rotation(rng), rng.normal(scale=0.2, size=3)) for _ in range(frames - 1)]
    return RigClip(skeleton_frames=(anchor, *moved), clip_id=clip_id)


def skin_rows(rng: np.random.Generator, rows: int, joints: int) -> np.ndarray:
    """Random row-stochastic matrix with strictly positive entries."""
    w = rng.uniform(0.05, 1.0, size=(rows, joints))
    return w / w.sum(axis=1, keepdims=True)
