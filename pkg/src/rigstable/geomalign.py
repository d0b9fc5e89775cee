"""
Rigid alignment of skeletons.

``kabsch_align`` is the correspondence-based least-squares fit used by the
temporal metrics. ``structure_tensor_align`` needs no correspondence: it
matches the principal axes of length-weighted edge structure tensors and picks
the eigenvector sign pattern that minimizes the midpoint Chamfer distance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import RigError
from .rig_types import Skeleton, frozen_array

logger = logging.getLogger(__name__)

__all__ = [
    "RigidTransform",
    "kabsch_align",
    "structure_tensor",
    "structure_tensor_align",
    "pairwise_sq_dists",
    "symmetric_chamfer",
    "candidate_rotations",
    "midpoints",
    "SIGN_PATTERNS",
]

# Eigenvector sign flips that keep det(R) = +1
SIGN_PATTERNS: Tuple[Tuple[float, float, float], ...] = (
    (1.0, 1.0, 1.0),
    (1.0, -1.0, -1.0),
    (-1.0, 1.0, -1.0),
    (-1.0, -1.0, 1.0),
)

DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """
    Rotation plus translation, applied as ``x -> R @ x + t``.

    ``method`` records how the transform was obtained (``kabsch``,
    ``structure_tensor``, ``kabsch_fallback``, ``centroid_fallback``,
    ``identity``).
    """
    rotation: np.ndarray
    translation: np.ndarray
    method: str = "kabsch"

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", frozen_array(self.rotation).reshape(3, 3))
        object.__setattr__(self, "translation", frozen_array(self.translation).reshape(3))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3), method="identity")

    @property
    def degenerate(self) -> bool:
        """True when produced by a fallback path."""
        return self.method.endswith("_fallback")

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (no translation)."""
        return np.asarray(vectors, dtype=np.float64).reshape(-1, 3) @ self.rotation.T


def _as_points(points: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise RigError("SHAPE_MISMATCH", f"{what} must be n x 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RigError("NONFINITE_COORDINATE", f"{what} contain non-finite coordinates")
    return arr


def kabsch_align(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """
    Least-squares rotation and translation (no scale) mapping source onto target.

    Correspondence is by row index. When the optimal orthogonal matrix is a
    reflection, the singular direction with the smallest singular value is
    flipped.

    Args:
        source: (J, 3) points to move
        target: (J, 3) points to match

    Returns:
        RigidTransform minimizing ``sum ||R s_i + t - g_i||^2``

    Raises:
        RigError: COUNT_MISMATCH, NONFINITE_COORDINATE
    """
    S = _as_points(source, "source")
    G = _as_points(target, "target")
    if S.shape[0] != G.shape[0]:
        raise RigError("COUNT_MISMATCH", f"source has {S.shape[0]} points, target has {G.shape[0]}")
    if S.shape[0] == 0:
        raise RigError("EMPTY_SET", "cannot align empty point sets")
    if S.shape[0] == 1:
        return RigidTransform(np.eye(3), G[0] - S[0], method="kabsch")

    cs = S.mean(axis=0)
    cg = G.mean(axis=0)
    H = (S - cs).T @ (G - cg)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cg - R @ cs
    return RigidTransform(R, t, method="kabsch")


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(n, m) squared Euclidean distances via explicit differences."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def symmetric_chamfer(a: np.ndarray, b: np.ndarray, squared: bool = True) -> float:
    """
    Half the sum of the two directed mean nearest-neighbor distances.

    Args:
        a: (n, 3) points
        b: (m, 3) points
        squared: average squared distances (losses) or plain distances (metrics)

    Raises:
        RigError: EMPTY_SET
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise RigError("EMPTY_SET", "Chamfer distance needs two nonempty point sets")
    d2 = pairwise_sq_dists(a, b)
    d = d2 if squared else np.sqrt(d2)
    return 0.5 * (float(d.min(axis=1).mean()) + float(d.min(axis=0).mean()))


def _edge_arrays(skel: Skeleton) -> Tuple[np.ndarray, np.ndarray]:
    edges = skel.edges()
    X = skel.joints
    vectors = X[edges[:, 1]] - X[edges[:, 0]]
    midpoints = 0.5 * (X[edges[:, 0]] + X[edges[:, 1]])
    return vectors, midpoints


def structure_tensor(vectors: np.ndarray) -> np.ndarray:
    """
    Length-weighted structure tensor ``sum_e w_e v_e v_e^T`` with ``w_e = |v_e| / sum |v|``.

    Returns the zero matrix when every edge has zero length.
    """
    v = np.asarray(vectors, dtype=np.float64).reshape(-1, 3)
    lengths = np.linalg.norm(v, axis=1)
    total = lengths.sum()
    if total <= 0:
        return np.zeros((3, 3))
    w = lengths / total
    return np.einsum("e,ei,ej->ij", w, v, v)


def _principal_axes(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    evals, evecs = np.linalg.eigh(S)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if np.linalg.det(evecs) < 0:
        evecs[:, 2] = -evecs[:, 2]
    return evals, evecs


def _is_degenerate(evals: np.ndarray) -> bool:
    return evals[0] <= 0 or evals[1] <= DEGENERATE_RTOL * evals[0]


def _tensor_axes(anchor: Skeleton, frame: Skeleton):
    _as_points(anchor.joints, "anchor joints")
    _as_points(frame.joints, "frame joints")
    v0, m0 = _edge_arrays(anchor)
    vk, mk = _edge_arrays(frame)
    if v0.shape[0] == 0 or vk.shape[0] == 0:
        raise RigError("NO_EDGES", "structure-tensor alignment needs at least one edge on both skeletons")
    ev0, Q0 = _principal_axes(structure_tensor(v0))
    evk, Qk = _principal_axes(structure_tensor(vk))
    return (ev0, Q0, m0), (evk, Qk, mk)


def candidate_rotations(anchor: Skeleton, frame: Skeleton) -> Tuple[RigidTransform, ...]:
    """The four proper sign-pattern candidates, in ``SIGN_PATTERNS`` order."""
    (_, Q0, m0), (_, Qk, mk) = _tensor_axes(anchor, frame)
    mu0, muk = m0.mean(axis=0), mk.mean(axis=0)
    out = []
    for signs in SIGN_PATTERNS:
        R = Qk @ np.diag(signs) @ Q0.T
        out.append(RigidTransform(R, muk - R @ mu0, method="structure_tensor"))
    return tuple(out)


def structure_tensor_align(anchor: Skeleton, frame: Skeleton) -> RigidTransform:
    """
    Correspondence-free rigid alignment of ``anchor`` onto ``frame``.

    Edges come from the parent vectors of each skeleton. Principal axes are
    ordered by descending eigenvalue and the four proper sign patterns are
    enumerated; the candidate with the smallest symmetric (squared) Chamfer
    distance between transformed anchor midpoints and frame midpoints wins.
    Translation maps the anchor midpoint centroid onto the frame's.

    When either tensor has rank < 2 the result falls back to Kabsch (equal
    joint counts) or to identity rotation plus centroid translation, and the
    method is tagged ``*_fallback``.

    Raises:
        RigError: NO_EDGES, NONFINITE_COORDINATE
    """
    (ev0, _, m0), (evk, _, mk) = _tensor_axes(anchor, frame)

    if _is_degenerate(ev0) or _is_degenerate(evk):
        if anchor.joint_count == frame.joint_count:
            fit = kabsch_align(anchor.joints, frame.joints)
            logger.warning("DEGENERATE_TENSOR: structure tensor rank < 2, using Kabsch")
            return RigidTransform(fit.rotation, fit.translation, method="kabsch_fallback")
        logger.warning("DEGENERATE_TENSOR: structure tensor rank < 2, using centroid translation")
        return RigidTransform(np.eye(3), mk.mean(axis=0) - m0.mean(axis=0), method="centroid_fallback")

    best_score = np.inf
    best = None
    for cand in candidate_rotations(anchor, frame):
        score = symmetric_chamfer(cand.apply(m0), mk)
        if best is None or score < best_score:
            best_score, best = score, cand
    return best


def midpoints(skeleton: Skeleton) -> np.ndarray:
    """(E, 3) parent-edge midpoints."""
    return _edge_arrays(skeleton)[1]
