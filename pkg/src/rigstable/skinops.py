"""
Shared skinning machinery.

Area-weighted surface sampling with one set of (face, barycentric) draws
reused on every frame, barycentric transfer of vertex teachers to sample
points, Top-K_s masks, and the masked renormalization/averaging operators used
by the skinning losses and metrics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import RigError
from .rig_types import RigClip, frozen_array
from .rigcore import clip_rng

logger = logging.getLogger(__name__)

__all__ = [
    "SurfaceSamples",
    "MaskedTeacher",
    "face_areas",
    "face_normals",
    "sample_surface",
    "barycentric_transfer",
    "build_mask",
    "build_masked_teacher",
    "renorm",
    "masked_avg",
    "masked_softmax",
    "point_to_segment",
    "points_to_segments",
]

DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """
    Pose-consistent surface samples.

    Attributes:
        face_index: (N,) containing face per sample
        face_vertices: (N, 3) vertex indices of that face
        barycentric: (N, 3) barycentric weights
        positions: (K+1, N, 3) per-frame positions
        normals: (K+1, N, 3) per-frame unit face normals (zero where degenerate)
        degenerate: (K+1, N) True where the face has zero area in that frame
    """
    face_index: np.ndarray
    face_vertices: np.ndarray
    barycentric: np.ndarray
    positions: np.ndarray
    normals: np.ndarray
    degenerate: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "face_index", frozen_array(self.face_index, np.int64))
        object.__setattr__(self, "face_vertices", frozen_array(self.face_vertices, np.int64))
        for name in ("barycentric", "positions", "normals"):
            object.__setattr__(self, name, frozen_array(getattr(self, name)))
        object.__setattr__(self, "degenerate", frozen_array(self.degenerate, bool))

    @property
    def count(self) -> int:
        return int(self.face_index.shape[0])

    @property
    def frame_count(self) -> int:
        return int(self.positions.shape[0])

    def query_matrix(self, frame: int) -> np.ndarray:
        """(N, 6) per-frame query rows ``[position, normal]``."""
        return np.concatenate([self.positions[frame], self.normals[frame]], axis=1)


@dataclass(frozen=True, eq=False)
class MaskedTeacher:
    """Point-level teacher weights with their Top-K_s support mask."""
    weights: np.ndarray
    mask: np.ndarray
    valid: np.ndarray
    k_s: int = 4
    gamma: float = 0.0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", frozen_array(self.weights))
        object.__setattr__(self, "mask", frozen_array(self.mask))
        object.__setattr__(self, "valid", frozen_array(self.valid, bool))
        if self.weights.shape != self.mask.shape:
            raise RigError("SHAPE_MISMATCH", f"teacher {self.weights.shape} and mask {self.mask.shape} differ")
        if self.weights.ndim != 2 or self.weights.shape[1] != self.valid.size:
            raise RigError("SHAPE_MISMATCH", "teacher columns must match the valid-joint mask")


def _triangles(vertices: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """(N_f,) triangle areas."""
    a, b, c = _triangles(np.asarray(vertices, dtype=np.float64), np.asarray(faces))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def face_normals(vertices: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unit geometric face normals and a mask of zero-area faces (normal left at 0)."""
    a, b, c = _triangles(np.asarray(vertices, dtype=np.float64), np.asarray(faces))
    n = np.cross(b - a, c - a)
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    degenerate = norms[:, 0] <= 0
    unit = np.divide(n, norms, out=np.zeros_like(n), where=norms > 0)
    return unit, degenerate


def sample_surface(
    clip: RigClip,
    n_samples: int,
    seed: int,
    barycentric: Optional[np.ndarray] = None,
) -> SurfaceSamples:
    """
    Area-weighted surface samples shared across all frames.

    Faces are drawn with probability proportional to their anchor-frame area
    and barycentric weights are uniform on the triangle (square-root warp).
    Sample ``i`` depends only on the per-clip stream of ``(seed, clip_id)``
    and ``i``.

    Args:
        clip: Clip with faces and mesh frames
        n_samples: Number of samples N (>= 1)
        seed: Global seed
        barycentric: Optional fixed barycentric weights, (3,) or (N, 3)

    Raises:
        ValueError: n_samples < 1
        RigError: NO_MESH, ZERO_AREA_MESH
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if not clip.has_mesh or not clip.mesh_frames:
        raise RigError("NO_MESH", f"clip {clip.clip_id!r} has no mesh to sample")
    faces = clip.faces
    V = clip.vertex_stack()
    if faces.shape[0] == 0:
        raise RigError("NO_MESH", f"clip {clip.clip_id!r} has no faces")

    areas = face_areas(V[0], faces)
    total = float(areas.sum())
    if not np.isfinite(total) or total <= 0:
        raise RigError("ZERO_AREA_MESH", f"anchor mesh of clip {clip.clip_id!r} has zero area")

    rng = clip_rng(seed, clip.clip_id)
    u = rng.random((n_samples, 3))
    cdf = np.cumsum(areas) / total
    face_index = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), faces.shape[0] - 1)

    if barycentric is None:
        r1 = np.sqrt(u[:, 1])
        lam = np.stack([1.0 - r1, r1 * (1.0 - u[:, 2]), r1 * u[:, 2]], axis=1)
    else:
        lam = np.broadcast_to(np.asarray(barycentric, dtype=np.float64), (n_samples, 3)).copy()

    tri = faces[face_index]
    positions = np.einsum("nr,knrd->knd", lam, V[:, tri])
    normals = np.empty_like(positions)
    degenerate = np.empty(positions.shape[:2], dtype=bool)
    for k in range(V.shape[0]):
        fn, fdeg = face_normals(V[k], faces)
        normals[k] = fn[face_index]
        degenerate[k] = fdeg[face_index]
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} sample normal(s) fall on zero-area faces")

    logger.debug(f"Sampled {n_samples} points on {faces.shape[0]} faces over {V.shape[0]} frame(s)")
    return SurfaceSamples(
        face_index=face_index,
        face_vertices=tri,
        barycentric=lam,
        positions=positions,
        normals=normals,
        degenerate=degenerate,
    )


def barycentric_transfer(vertex_teacher: np.ndarray, samples: SurfaceSamples) -> np.ndarray:
    """
    Interpolate per-vertex weights to sample points with their barycentric weights.

    Raises:
        RigError: SHAPE_MISMATCH
    """
    W = np.asarray(vertex_teacher, dtype=np.float64)
    if W.ndim != 2:
        raise RigError("SHAPE_MISMATCH", f"vertex teacher must be N_v x J, got shape {W.shape}")
    if samples.count and samples.face_vertices.max() >= W.shape[0]:
        raise RigError(
            "SHAPE_MISMATCH",
            f"samples reference vertex {int(samples.face_vertices.max())}, teacher has {W.shape[0]} rows",
        )
    return np.einsum("nr,nrj->nj", samples.barycentric, W[samples.face_vertices])


def _check_valid(valid: np.ndarray, joint_count: int) -> np.ndarray:
    valid = np.asarray(valid, dtype=bool).reshape(-1)
    if valid.size != joint_count:
        raise RigError("SHAPE_MISMATCH", f"valid mask has {valid.size} entries for {joint_count} joints")
    if not valid.any():
        raise RigError("NO_VALID_JOINTS", "at least one joint must be valid")
    return valid


def build_mask(teacher: np.ndarray, valid: np.ndarray, k_s: int = 4, gamma: float = 0.0) -> np.ndarray:
    """
    Top-K_s support mask.

    Per row: 1 on the ``k_s`` largest teacher entries among valid joints
    (equal entries go to the lower joint index), ``gamma`` on the other valid
    joints, 0 on invalid joints.

    Raises:
        ValueError: k_s < 1 or gamma outside [0, 1)
        RigError: NO_VALID_JOINTS, SHAPE_MISMATCH
    """
    if k_s < 1:
        raise ValueError(f"k_s must be >= 1, got {k_s}")
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    T = np.asarray(teacher, dtype=np.float64)
    valid = _check_valid(valid, T.shape[1])
    scores = np.where(valid[None, :], T, -np.inf)
    order = np.argsort(-scores, axis=1, kind="stable")
    top = min(k_s, int(valid.sum()))
    mask = np.where(valid[None, :], gamma, 0.0) * np.ones_like(T)
    rows = np.arange(T.shape[0])[:, None]
    mask[rows, order[:, :top]] = 1.0
    return mask


def build_masked_teacher(
    point_teacher: np.ndarray,
    valid: np.ndarray,
    k_s: int = 4,
    gamma: float = 0.0,
    epsilon: float = DEFAULT_EPSILON,
    min_valid_joints: int = 1,
) -> MaskedTeacher:
    """
    Zero invalid joints, renormalize rows over valid joints and attach the Top-K_s mask.

    Raises:
        RigError: NO_VALID_JOINTS when fewer than ``min_valid_joints`` joints are valid
    """
    T = np.asarray(point_teacher, dtype=np.float64)
    valid = _check_valid(valid, T.shape[1])
    if int(valid.sum()) < min_valid_joints:
        raise RigError(
            "NO_VALID_JOINTS", f"{int(valid.sum())} valid joint(s), at least {min_valid_joints} required",
        )
    W = np.where(valid[None, :], T, 0.0)
    sums = W.sum(axis=1, keepdims=True)
    W = np.divide(W, sums, out=np.zeros_like(W), where=sums > 0)
    mask = build_mask(W, valid, k_s=k_s, gamma=gamma)
    return MaskedTeacher(weights=W, mask=mask, valid=valid, k_s=k_s, gamma=gamma, epsilon=epsilon)


def renorm(
    Z: np.ndarray, m: np.ndarray, epsilon: float = DEFAULT_EPSILON, return_empty: bool = False
) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    Renormalize rows on the mask support: ``(Z * [m > 0]) / (support sum + epsilon)``.

    Rows with no mass on the support come back as zeros; pass
    ``return_empty=True`` to also get the boolean mask of those rows.
    """
    Z = np.asarray(Z, dtype=np.float64)
    support = np.asarray(m) > 0
    num = np.where(support, Z, 0.0)
    sums = num.sum(axis=1, keepdims=True)
    out = num / (sums + epsilon)
    empty = sums[:, 0] == 0
    if empty.any():
        logger.debug(f"renorm: {int(empty.sum())} row(s) have no mass on the support")
    if return_empty:
        return out, empty
    return out


def masked_avg(f: np.ndarray, m: np.ndarray) -> float:
    """
    ``sum(f * m) / (sum(m) / N)`` with N the row count.

    Raises:
        RigError: SHAPE_MISMATCH, ZERO_MASK
    """
    f = np.asarray(f, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if f.shape != m.shape or f.ndim != 2:
        raise RigError("SHAPE_MISMATCH", f"values {f.shape} and mask {m.shape} must be equal N x J shapes")
    mass = float(m.sum())
    if mass == 0:
        raise RigError("ZERO_MASK", "mask has no active entries")
    return float((f * m).sum()) / (mass / f.shape[0])


def masked_softmax(Z: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Row softmax over valid columns; invalid columns are exactly 0."""
    Z = np.asarray(Z, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    logits = np.where(valid[None, :], Z, -np.inf)
    top = logits.max(axis=1, keepdims=True)
    e = np.where(valid[None, :], np.exp(logits - top), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def point_to_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Distance from ``p`` to the closed segment ``ab`` (a point when ``a == b``)."""
    p, a, b = (np.asarray(x, dtype=np.float64) for x in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(p - (a + t * ab)))


def points_to_segments(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """(N, J) distances from each point to each segment ``A[j] B[j]``."""
    P = np.asarray(P, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    AB = np.asarray(B, dtype=np.float64) - A
    denom = np.einsum("jd,jd->j", AB, AB)
    AP = P[:, None, :] - A[None, :, :]
    proj = np.einsum("njd,jd->nj", AP, AB)
    t = np.divide(proj, denom[None, :], out=np.zeros_like(proj), where=denom[None, :] > 0)
    t = np.clip(t, 0.0, 1.0)
    closest = A[None, :, :] + t[..., None] * AB[None, :, :]
    return np.linalg.norm(P[:, None, :] - closest, axis=-1)
