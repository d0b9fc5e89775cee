"""
Procedural animated rig clips with ground truth.

Builds a rest skeleton (chain, two-branch or star), swings every non-root joint
sinusoidally about a seeded axis, poses it by forward kinematics, wraps each
bone in an open tube mesh and deforms the mesh with linear blend skinning
using smooth pose-invariant weights. The result is bounding-box normalized.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .rig_types import MeshFrame, RigClip, Skeleton
from .rigcore import bbox_normalize, clip_rng
from .skinloss import bone_segments
from .skinops import points_to_segments

logger = logging.getLogger(__name__)

__all__ = [
    "SynthConfig",
    "TOPOLOGIES",
    "topology_parents",
    "rotation_about",
    "generate_clip",
    "perturb_clip",
    "clip_from_static_mesh",
]

TOPOLOGIES = ("chain", "two_branch", "star")
WEIGHT_DELTA = 1e-6
SWING_PERIOD = 8.0


@dataclass(frozen=True)
class SynthConfig:
    """
    Generator settings.

    Attributes:
        joint_count: J (>= 2)
        topology: chain, two_branch or star
        amplitude: swing amplitude in radians, in [0, pi)
        frame_count: K+1 (>= 1)
        tube_radius: tube radius around each bone (pre-normalization units)
        tube_segments: vertices per tube ring
        rings_per_bone: rings along each bone
        bone_length: rest bone length
        zigzag: size of random bends between consecutive bones
        seed: generator seed
        clip_id: identifier (default derived from the other fields)
    """
    joint_count: int = 6
    topology: str = "two_branch"
    amplitude: float = 0.6
    frame_count: int = 3
    tube_radius: float = 0.04
    tube_segments: int = 10
    rings_per_bone: int = 24
    bone_length: float = 0.2
    zigzag: float = 0.15
    seed: int = 42
    clip_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.joint_count < 2:
            raise ConfigError("INVALID_CONFIG", f"joint_count must be >= 2, got {self.joint_count}")
        if self.topology not in TOPOLOGIES:
            raise ConfigError("INVALID_CONFIG", f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if not (0.0 <= self.amplitude < np.pi):
            raise ConfigError("INVALID_CONFIG", f"amplitude must lie in [0, pi), got {self.amplitude}")
        if self.frame_count < 1:
            raise ConfigError("INVALID_CONFIG", f"frame_count must be >= 1, got {self.frame_count}")
        if self.tube_radius <= 0 or self.bone_length <= 0:
            raise ConfigError("INVALID_CONFIG", "tube_radius and bone_length must be positive")
        if self.tube_segments < 3 or self.rings_per_bone < 2:
            raise ConfigError("INVALID_CONFIG", "need >= 3 tube segments and >= 2 rings per bone")
        if self.zigzag < 0:
            raise ConfigError("INVALID_CONFIG", f"zigzag must be non-negative, got {self.zigzag}")

    @property
    def resolved_clip_id(self) -> str:
        return self.clip_id or f"synth-{self.topology}-j{self.joint_count}-s{self.seed}"


def topology_parents(joint_count: int, topology: str) -> np.ndarray:
    """
    1-based parent labels with joint 0 as the only root.

    ``two_branch`` hangs two chains off the root: ``(J-1)//2`` joints and the rest.
    """
    J = joint_count
    parents = np.zeros(J, dtype=np.int64)
    if topology == "chain":
        parents[1:] = np.arange(1, J)
    elif topology == "star":
        parents[1:] = 1
    elif topology == "two_branch":
        first = (J - 1) // 2
        for j in range(1, J):
            starts_branch = j == 1 or j == first + 1
            parents[j] = 1 if starts_branch else j
    else:
        raise ConfigError("INVALID_CONFIG", f"unknown topology {topology!r}")
    return parents


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix; angle 0 gives the identity exactly."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def _branch_direction(j: int, parents: np.ndarray, topology: str) -> np.ndarray:
    J = parents.size
    if topology == "star":
        angle = 2.0 * np.pi * (j - 1) / (J - 1)
        return np.array([np.cos(angle), np.sin(angle), 0.3])
    if topology == "two_branch":
        first = (J - 1) // 2
        return np.array([-0.5, 0.85, 0.0]) if j <= first else np.array([0.5, 0.85, 0.0])
    return np.array([0.0, 1.0, 0.0])


def _rest_offsets(cfg: SynthConfig, parents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    offsets = np.zeros((cfg.joint_count, 3))
    for j in range(1, cfg.joint_count):
        d = _branch_direction(j, parents, cfg.topology)
        d = d / np.linalg.norm(d) + cfg.zigzag * rng.normal(size=3)
        offsets[j] = cfg.bone_length * d / np.linalg.norm(d)
    return offsets


def _forward_kinematics(
    parents: np.ndarray, offsets: np.ndarray, local: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    J = parents.size
    glob = np.zeros((J, 3, 3))
    pos = np.zeros((J, 3))
    glob[0] = local[0]
    for j in range(1, J):
        p = parents[j] - 1
        glob[j] = glob[p] @ local[j]
        pos[j] = pos[p] + glob[p] @ offsets[j]
    return glob, pos


def _perpendicular_basis(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def _tube_mesh(rest: np.ndarray, parents: np.ndarray, cfg: SynthConfig) -> Tuple[np.ndarray, np.ndarray]:
    verts: List[np.ndarray] = []
    faces: List[Tuple[int, int, int]] = []
    S, R = cfg.tube_segments, cfg.rings_per_bone
    theta = 2.0 * np.pi * np.arange(S) / S
    t = np.linspace(0.0, 1.0, R)
    for j in range(1, parents.size):
        a, b = rest[parents[j] - 1], rest[j]
        axis = (b - a) / np.linalg.norm(b - a)
        u, v = _perpendicular_basis(axis)
        base = sum(x.shape[0] for x in verts)
        ring = cfg.tube_radius * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v)
        centers = a + t[:, None] * (b - a)
        verts.append((centers[:, None, :] + ring[None, :, :]).reshape(-1, 3))
        for r in range(R - 1):
            for s in range(S):
                i0 = base + r * S + s
                i1 = base + r * S + (s + 1) % S
                i2 = i0 + S
                i3 = i1 + S
                faces.append((i0, i1, i3))
                faces.append((i0, i3, i2))
    return np.concatenate(verts, axis=0), np.array(faces, dtype=np.int64)


def _two_bone_weights(vertices: np.ndarray, rest_skeleton: Skeleton) -> np.ndarray:
    A, B = bone_segments(rest_skeleton)
    d = points_to_segments(vertices, A, B)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :2]
    rows = np.arange(vertices.shape[0])[:, None]
    W = np.zeros_like(d)
    W[rows, nearest] = 1.0 / (d[rows, nearest] ** 2 + WEIGHT_DELTA)
    return W / W.sum(axis=1, keepdims=True)


def generate_clip(cfg: SynthConfig = SynthConfig()) -> RigClip:
    """
    Generate a normalized animated clip with ground-truth skin weights.

    Weight column ``j`` follows the bone from ``parent(j)`` to ``j`` (the
    parent's global transform); the root column is a point-bone at the root.
    Identical configs give bit-identical clips.
    """
    rng = np.random.default_rng(cfg.seed)
    J = cfg.joint_count
    parents = topology_parents(J, cfg.topology)
    offsets = _rest_offsets(cfg, parents, rng)
    axes = rng.normal(size=(J, 3))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=J)

    _, rest = _forward_kinematics(parents, offsets, np.broadcast_to(np.eye(3), (J, 3, 3)))
    rest_skeleton = Skeleton(rest, parents)
    rest_verts, faces = _tube_mesh(rest, parents, cfg)
    weights = _two_bone_weights(rest_verts, rest_skeleton)

    skeletons: List[Skeleton] = []
    meshes: List[MeshFrame] = []
    for k in range(cfg.frame_count):
        local = np.stack([np.eye(3)] + [
            rotation_about(axes[j], cfg.amplitude * np.sin(2.0 * np.pi * k / SWING_PERIOD + phases[j]))
            for j in range(1, J)
        ])
        glob, pos = _forward_kinematics(parents, offsets, local)
        blended = weights[:, :1] * rest_verts
        for j in range(1, J):
            # bone j moves with its parent's frame
            p = parents[j] - 1
            blended = blended + weights[:, j:j + 1] * ((rest_verts - rest[p]) @ glob[p].T + pos[p])
        skeletons.append(Skeleton(pos, parents))
        meshes.append(MeshFrame(blended))

    clip = RigClip(
        skeleton_frames=tuple(skeletons),
        faces=faces,
        mesh_frames=tuple(meshes),
        skin_weights=tuple(weights for _ in range(cfg.frame_count)),
        valid_mask=np.ones(J, dtype=bool),
        clip_id=cfg.resolved_clip_id,
        metadata={"generator": asdict(cfg)},
    )
    logger.info(f"Generated {clip.clip_id!r}: J={J}, frames={cfg.frame_count}, N_v={rest_verts.shape[0]}")
    return bbox_normalize(clip)


def perturb_clip(clip: RigClip, sigma: float, seed: int) -> RigClip:
    """
    Add iid Gaussian noise to joints and vertices of every non-anchor frame.

    The anchor frame objects are reused untouched; ``sigma == 0`` returns the
    input clip itself.
    """
    if sigma < 0 or not np.isfinite(sigma):
        raise ValueError(f"sigma must be finite and non-negative, got {sigma}")
    if sigma == 0:
        return clip
    rng = clip_rng(seed, clip.clip_id)
    skeletons = [clip.skeleton_frames[0]]
    meshes = [clip.mesh_frames[0]] if clip.mesh_frames else None
    for k in range(1, clip.frame_count):
        s = clip.skeleton_frames[k]
        skeletons.append(s.with_joints(s.joints + rng.normal(0.0, sigma, size=s.joints.shape)))
        if meshes is not None:
            v = clip.mesh_frames[k].vertices
            meshes.append(MeshFrame(v + rng.normal(0.0, sigma, size=v.shape)))
    metadata = dict(clip.metadata)
    metadata["perturbation"] = {"sigma": float(sigma), "seed": int(seed)}
    return clip.replace(
        skeleton_frames=tuple(skeletons),
        mesh_frames=tuple(meshes) if meshes is not None else None,
        metadata=metadata,
    )


def clip_from_static_mesh(
    vertices: np.ndarray,
    faces: np.ndarray,
    skeleton: Optional[Skeleton] = None,
    clip_id: str = "static",
) -> RigClip:
    """
    Wrap one static mesh into a single-frame clip.

    Without a skeleton a single root joint is placed at the bounding-box center.
    """
    V = np.asarray(vertices, dtype=np.float64)
    if skeleton is None:
        center = (V.min(axis=0) + V.max(axis=0)) / 2.0
        skeleton = Skeleton(center.reshape(1, 3), np.zeros(1, dtype=np.int64))
    return RigClip(
        skeleton_frames=(skeleton,),
        faces=np.asarray(faces, dtype=np.int64),
        mesh_frames=(MeshFrame(V),),
        clip_id=clip_id,
    )
