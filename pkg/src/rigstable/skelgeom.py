"""
Permutation-invariant geometry loss on decoded skeletons.

Each non-anchor frame is rigidly aligned to the anchor and compared through
three correspondence-free terms: bidirectional best-cosine matching of edge
directions, sorted edge lengths, and a symmetric Chamfer distance between edge
endpoints. Forward evaluation only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import RigError
from .geomalign import RigidTransform, kabsch_align, structure_tensor_align, symmetric_chamfer
from .rig_types import Skeleton, frozen_array

logger = logging.getLogger(__name__)

__all__ = [
    "EdgeGeometry",
    "GeomLossConfig",
    "FrameGeomTerms",
    "GeomLossResult",
    "edge_geometry",
    "top_rho_edges",
    "directional_loss",
    "length_loss",
    "endpoint_chamfer",
    "geom_loss",
    "skeleton_total_loss",
]

ALIGNMENTS = ("structure_tensor", "kabsch")


@dataclass(frozen=True, eq=False)
class EdgeGeometry:
    """Parent edges of one skeleton with their vectors and midpoints."""
    edges: np.ndarray
    vectors: np.ndarray
    midpoints: np.ndarray
    endpoints: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", frozen_array(self.edges, np.int64).reshape(-1, 2))
        for name in ("vectors", "midpoints", "endpoints"):
            object.__setattr__(self, name, frozen_array(getattr(self, name)).reshape(-1, 3))

    def __len__(self) -> int:
        return int(self.edges.shape[0])

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)


def edge_geometry(skeleton: Skeleton) -> EdgeGeometry:
    """Edges ``(i, j)`` with ``parent(j) = i``; endpoints hold both ends of every edge."""
    edges = skeleton.edges()
    X = skeleton.joints
    a, b = X[edges[:, 0]], X[edges[:, 1]]
    return EdgeGeometry(
        edges=edges,
        vectors=b - a,
        midpoints=0.5 * (a + b),
        endpoints=np.concatenate([a, b], axis=0),
    )


def _unit(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)


def top_rho_edges(geom: EdgeGeometry, rho: float = 1.0) -> EdgeGeometry:
    """
    Keep the ``ceil(rho * |E|)`` longest edges with unit direction vectors.

    Equal lengths are ordered by the ``(parent, child)`` index pair.

    Raises:
        ValueError: rho outside (0, 1]
        RigError: NO_EDGES
    """
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    n = len(geom)
    if n == 0:
        raise RigError("NO_EDGES", "top-rho selection needs at least one edge")
    keep = max(1, math.ceil(round(rho * n, 12)))
    lengths = geom.lengths
    order = np.lexsort((geom.edges[:, 1], geom.edges[:, 0], -lengths))[:keep]
    half = n
    endpoint_idx = np.concatenate([order, order + half])
    return EdgeGeometry(
        edges=geom.edges[order],
        vectors=_unit(geom.vectors[order]),
        midpoints=geom.midpoints[order],
        endpoints=geom.endpoints[endpoint_idx],
    )


def directional_loss(anchor: EdgeGeometry, frame: EdgeGeometry, rotation: np.ndarray) -> float:
    """
    Bidirectional best-cosine mismatch of edge directions in [0, 2].

    Anchor directions are rotated by ``rotation``; each anchor direction is
    matched to its best frame direction and vice versa.

    Raises:
        RigError: NO_EDGES
    """
    if len(anchor) == 0 or len(frame) == 0:
        raise RigError("NO_EDGES", "directional loss needs edges on both skeletons")
    a = _unit(anchor.vectors) @ np.asarray(rotation, dtype=np.float64).T
    f = _unit(frame.vectors)
    cos = np.clip(a @ f.T, -1.0, 1.0)
    forward = 1.0 - float(cos.max(axis=1).mean())
    backward = 1.0 - float(cos.max(axis=0).mean())
    return 0.5 * (forward + backward)


def length_loss(anchor: EdgeGeometry, frame: EdgeGeometry) -> float:
    """
    Mean squared difference of the first ``min(|E_0|, |E_k|)`` ascending lengths.

    Raises:
        RigError: NO_EDGES
    """
    if len(anchor) == 0 or len(frame) == 0:
        raise RigError("NO_EDGES", "length loss needs edges on both skeletons")
    la = np.sort(anchor.lengths)
    lf = np.sort(frame.lengths)
    m = min(la.size, lf.size)
    return float(np.mean((la[:m] - lf[:m]) ** 2))


def endpoint_chamfer(anchor_points: np.ndarray, frame_points: np.ndarray, transform: RigidTransform) -> float:
    """
    Symmetric squared Chamfer distance between transformed anchor endpoints and frame endpoints.

    Raises:
        RigError: EMPTY_SET
    """
    anchor_points = np.asarray(anchor_points, dtype=np.float64).reshape(-1, 3)
    if anchor_points.shape[0] == 0:
        raise RigError("EMPTY_SET", "endpoint Chamfer needs anchor endpoints")
    return symmetric_chamfer(transform.apply(anchor_points), frame_points, squared=True)


@dataclass(frozen=True)
class GeomLossConfig:
    """
    Geometry loss settings.

    ``alignment="kabsch"`` is honored only when the frame has the anchor's
    joint and edge counts; otherwise structure tensors are used.
    """
    rho: float = 1.0
    lambda_dir: float = 1.0
    lambda_len: float = 1.0
    lambda_ch: float = 1.0
    alignment: str = "structure_tensor"

    def __post_init__(self) -> None:
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        for name in ("lambda_dir", "lambda_len", "lambda_ch"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if self.alignment not in ALIGNMENTS:
            raise ValueError(f"alignment must be one of {ALIGNMENTS}, got {self.alignment!r}")


@dataclass(frozen=True)
class FrameGeomTerms:
    frame: int
    dir: float
    len: float
    ch: float
    total: float
    alignment: str
    degenerate: bool = False

    def as_dict(self) -> Dict[str, object]:
        return {
            "frame": self.frame, "dir": self.dir, "len": self.len, "ch": self.ch,
            "total": self.total, "alignment": self.alignment, "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class GeomLossResult:
    total: float
    frames: Tuple[FrameGeomTerms, ...]

    @property
    def degenerate_frames(self) -> List[int]:
        return [f.frame for f in self.frames if f.degenerate]


def _align(anchor: Skeleton, frame: Skeleton, g0: EdgeGeometry, gk: EdgeGeometry, cfg: GeomLossConfig) -> RigidTransform:
    if cfg.alignment == "kabsch" and len(g0) == len(gk) and anchor.joint_count == frame.joint_count:
        return kabsch_align(anchor.joints, frame.joints)
    return structure_tensor_align(anchor, frame)


def _frame_terms(
    index: int, anchor: Skeleton, frame: Skeleton, g0: EdgeGeometry, top0: EdgeGeometry, cfg: GeomLossConfig
) -> FrameGeomTerms:
    gk = edge_geometry(frame)
    if len(gk) == 0:
        # maximal penalty for a prediction with no bones
        d = 2.0
        ln = float(np.mean(g0.lengths ** 2))
        centered = g0.endpoints - g0.endpoints.mean(axis=0)
        ch = float(np.mean(np.sum(centered ** 2, axis=1)))
        total = cfg.lambda_dir * d + cfg.lambda_len * ln + cfg.lambda_ch * ch
        logger.warning(f"DEGENERATE: frame {index} has no edges; applying maximal geometry penalty")
        return FrameGeomTerms(index, d, ln, ch, total, alignment="none", degenerate=True)

    T = _align(anchor, frame, g0, gk, cfg)
    d = directional_loss(top0, top_rho_edges(gk, cfg.rho), T.rotation)
    ln = length_loss(g0, gk)
    ch = endpoint_chamfer(g0.endpoints, gk.endpoints, T)
    total = cfg.lambda_dir * d + cfg.lambda_len * ln + cfg.lambda_ch * ch
    return FrameGeomTerms(index, d, ln, ch, total, alignment=T.method, degenerate=T.degenerate)


def geom_loss(anchor: Skeleton, frames: Sequence[Skeleton], cfg: GeomLossConfig = GeomLossConfig()) -> GeomLossResult:
    """
    Mean geometry loss of ``frames`` against ``anchor``.

    Directions use the top-rho subsets; lengths and Chamfer use all edges.
    Frames without edges get a finite maximal penalty and are flagged.

    Args:
        anchor: Anchor skeleton (needs at least one edge)
        frames: Non-anchor skeletons, frame numbering starts at 1
        cfg: Weights, rho and alignment mode

    Raises:
        RigError: NO_EDGES (anchor), NO_FRAMES
    """
    g0 = edge_geometry(anchor)
    if len(g0) == 0:
        raise RigError("NO_EDGES", "anchor skeleton has no edges")
    if not frames:
        raise RigError("NO_FRAMES", "geometry loss needs at least one non-anchor frame")
    top0 = top_rho_edges(g0, cfg.rho)
    terms = tuple(_frame_terms(k, anchor, f, g0, top0, cfg) for k, f in enumerate(frames, start=1))
    total = float(np.mean([t.total for t in terms]))
    return GeomLossResult(total=total, frames=terms)


def skeleton_total_loss(
    token_total: float, geom_total: float, lambda_token: float = 1.0, lambda_geom: float = 0.5
) -> float:
    """Overall skeleton objective ``lambda_token * L_token + lambda_geom * L_geom``."""
    if lambda_token < 0 or lambda_geom < 0:
        raise ValueError("skeleton loss weights must be non-negative")
    return lambda_token * token_total + lambda_geom * geom_total
