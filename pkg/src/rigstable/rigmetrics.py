"""
Evaluation protocol for rig temporal stability and skinning consistency.

Skeleton metrics compare every non-anchor frame with the anchor after rigid
(Kabsch, no scale) alignment onto the anchor:

- PJDD: drift of the sorted pairwise joint distances
- BLRD: drift of the sorted anchor-MST bone lengths
- GSD: drift of the normalized Laplacian spectrum on the anchor MST
- JAD: mean normalized angle between anchor and aligned bone directions

Static metrics (MPJPE at the anchor, Chamfer variants) compare a prediction to
ground truth. Skinning metrics compare per-frame point predictions to the
anchor teacher through the masked operators of ``skinops``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import RigError
from .geomalign import kabsch_align, symmetric_chamfer
from .rig_types import RigClip, Skeleton
from .rigcore import anchor_mst
from .skinloss import masked_entropy, masked_l1, sym_kl
from .skinops import MaskedTeacher, renorm

logger = logging.getLogger(__name__)

__all__ = [
    "METRIC_EPS",
    "CHAMFER_MODES",
    "SkinConsistency",
    "aligned_frames",
    "pjdd",
    "blrd",
    "normalized_laplacian",
    "laplacian_spectrum",
    "gsd",
    "jad",
    "mpjpe_anchor",
    "bone_samples",
    "chamfer_static",
    "skin_consistency",
    "per_joint_variance",
    "joint_delta",
    "top_improved_joints",
    "skin_static_quality",
]

METRIC_EPS = 1e-9
CHAMFER_MODES = ("J2J", "J2B", "B2B")
DEFAULT_N_EIGS = 8
DEFAULT_SAMPLES_PER_BONE = 16

FramesLike = Union[RigClip, Sequence[Skeleton]]


def _frames(clip: FramesLike) -> Tuple[Skeleton, ...]:
    if isinstance(clip, RigClip):
        return clip.skeleton_frames
    return tuple(clip)


def aligned_frames(clip: FramesLike) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Anchor joints and every non-anchor frame Kabsch-aligned onto them.

    Raises:
        RigError: TOO_FEW_FRAMES, COUNT_MISMATCH, SINGLE_JOINT, NONFINITE_COORDINATE
    """
    frames = _frames(clip)
    if len(frames) < 2:
        raise RigError("TOO_FEW_FRAMES", "temporal metrics need at least one non-anchor frame")
    J = frames[0].joint_count
    varying = [k for k, f in enumerate(frames) if f.joint_count != J]
    if varying:
        raise RigError("COUNT_MISMATCH", f"frames {varying} differ from the anchor joint count {J}")
    if J < 2:
        raise RigError("SINGLE_JOINT", "temporal metrics need at least two joints")
    X0 = frames[0].joints
    aligned = []
    for f in frames[1:]:
        T = kabsch_align(f.joints, X0)
        aligned.append(T.apply(f.joints))
    return X0, aligned


def _pairwise_sorted(X: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(X.shape[0], k=1)
    return np.sort(np.linalg.norm(X[i] - X[j], axis=1))


def pjdd(clip: FramesLike) -> float:
    """Pairwise joint distance deviation, averaged over non-anchor frames."""
    X0, aligned = aligned_frames(clip)
    D0 = _pairwise_sorted(X0)
    scale = max(float(np.median(D0)), METRIC_EPS)
    return float(np.mean([np.mean(np.abs(_pairwise_sorted(Xk) - D0)) / scale for Xk in aligned]))


def _edge_array(X0: np.ndarray) -> np.ndarray:
    return np.array(anchor_mst(Skeleton(X0, np.zeros(X0.shape[0], dtype=np.int64))), dtype=np.int64).reshape(-1, 2)


def _edge_lengths(X: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.linalg.norm(X[edges[:, 1]] - X[edges[:, 0]], axis=1)


def blrd(clip: FramesLike) -> float:
    """Bone length relative deviation on the anchor MST, averaged over non-anchor frames."""
    X0, aligned = aligned_frames(clip)
    edges = _edge_array(X0)
    L0 = np.sort(_edge_lengths(X0, edges))
    scale = max(float(np.median(L0)), METRIC_EPS)
    return float(np.mean([
        np.mean(np.abs(np.sort(_edge_lengths(Xk, edges)) - L0)) / scale for Xk in aligned
    ]))


def normalized_laplacian(X: np.ndarray, edges: np.ndarray, scale: float) -> np.ndarray:
    """
    ``I - D^-1/2 W D^-1/2`` with ``W_uv = |x_u - x_v| / scale`` on ``edges``.

    Degrees are floored at the metric epsilon so coincident or isolated joints
    stay finite.
    """
    J = X.shape[0]
    W = np.zeros((J, J))
    w = _edge_lengths(X, edges) / scale
    W[edges[:, 0], edges[:, 1]] = w
    W[edges[:, 1], edges[:, 0]] = w
    deg = np.maximum(W.sum(axis=1), METRIC_EPS)
    return np.eye(J) - W / np.sqrt(np.outer(deg, deg))


def laplacian_spectrum(X: np.ndarray, edges: np.ndarray, scale: float, n_eigs: int = DEFAULT_N_EIGS) -> np.ndarray:
    """First ``min(n_eigs, J)`` ascending normalized Laplacian eigenvalues."""
    evals = np.linalg.eigvalsh(normalized_laplacian(X, edges, scale))
    return evals[: min(n_eigs, X.shape[0])]


def gsd(clip: FramesLike, n_eigs: int = DEFAULT_N_EIGS) -> float:
    """Graph spectral discrepancy on the anchor MST, averaged over non-anchor frames."""
    if n_eigs < 1:
        raise ValueError(f"n_eigs must be >= 1, got {n_eigs}")
    X0, aligned = aligned_frames(clip)
    edges = _edge_array(X0)
    scale = max(float(np.median(_edge_lengths(X0, edges))), METRIC_EPS)
    lam0 = laplacian_spectrum(X0, edges, scale, n_eigs)
    return float(np.mean([
        np.mean(np.abs(laplacian_spectrum(Xk, edges, scale, n_eigs) - lam0)) for Xk in aligned
    ]))


def jad(clip: FramesLike) -> float:
    """
    Joint angle discrepancy in [0, 1] on the anchor MST.

    Anchor directions come from raw anchor joints, frame directions from the
    aligned frame. Edges with zero length at either end are skipped.

    Raises:
        RigError: ZERO_LENGTH_EDGE when no edge can be measured
    """
    X0, aligned = aligned_frames(clip)
    edges = _edge_array(X0)
    a = X0[edges[:, 1]] - X0[edges[:, 0]]
    a_len = np.linalg.norm(a, axis=1)
    per_frame = []
    skipped = 0
    for Xk in aligned:
        b = Xk[edges[:, 1]] - Xk[edges[:, 0]]
        b_len = np.linalg.norm(b, axis=1)
        keep = (a_len > 0) & (b_len > 0)
        skipped += int((~keep).sum())
        if not keep.any():
            continue
        ua = a[keep] / a_len[keep, None]
        ub = b[keep] / b_len[keep, None]
        # same angle as arccos(clamped dot), exact near 0
        angle = np.arctan2(np.linalg.norm(np.cross(ua, ub), axis=1), np.einsum("ed,ed->e", ua, ub))
        per_frame.append(float(np.mean(angle / np.pi)))
    if skipped:
        logger.warning(f"ZERO_LENGTH_EDGE: skipped {skipped} zero-length edge measurement(s) in JAD")
    if not per_frame:
        raise RigError("ZERO_LENGTH_EDGE", "every anchor MST edge has zero length")
    return float(np.mean(per_frame))


def mpjpe_anchor(pred: Skeleton, gt: Skeleton) -> float:
    """
    Mean Euclidean joint error without alignment.

    Raises:
        RigError: COUNT_MISMATCH
    """
    if pred.joint_count != gt.joint_count:
        raise RigError("COUNT_MISMATCH", f"prediction has {pred.joint_count} joints, ground truth {gt.joint_count}")
    return float(np.mean(np.linalg.norm(pred.joints - gt.joints, axis=1)))


def bone_samples(skeleton: Skeleton, samples_per_bone: int = DEFAULT_SAMPLES_PER_BONE) -> np.ndarray:
    """Uniform points along every parent bone, endpoints included."""
    if samples_per_bone < 2:
        raise ValueError(f"samples_per_bone must be >= 2, got {samples_per_bone}")
    edges = skeleton.edges()
    X = skeleton.joints
    t = np.linspace(0.0, 1.0, samples_per_bone)
    a, b = X[edges[:, 0]], X[edges[:, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return pts.reshape(-1, 3)


def chamfer_static(
    pred: Skeleton, gt: Skeleton, mode: str = "J2J", samples_per_bone: int = DEFAULT_SAMPLES_PER_BONE
) -> float:
    """
    Symmetric mean nearest-neighbor Euclidean distance.

    ``J2J`` compares joints, ``J2B`` predicted joints with points along
    ground-truth bones, ``B2B`` bone points on both sides.

    Raises:
        ValueError: unknown mode
        RigError: NO_EDGES, EMPTY_SET
    """
    mode = mode.upper()
    if mode not in CHAMFER_MODES:
        raise ValueError(f"mode must be one of {CHAMFER_MODES}, got {mode!r}")

    def _bones(skel: Skeleton, side: str) -> np.ndarray:
        if skel.edges().shape[0] == 0:
            raise RigError("NO_EDGES", f"{side} skeleton has no bones for {mode}")
        return bone_samples(skel, samples_per_bone)

    a = pred.joints if mode in ("J2J", "J2B") else _bones(pred, "predicted")
    b = gt.joints if mode == "J2J" else _bones(gt, "ground-truth")
    return symmetric_chamfer(a, b, squared=False)


@dataclass(frozen=True)
class SkinConsistency:
    l1_bca: float
    symkl_bca: float
    entropy: float

    def as_dict(self) -> Dict[str, float]:
        return {"l1_bca": self.l1_bca, "symkl_bca": self.symkl_bca, "entropy": self.entropy}


def skin_consistency(preds: Sequence[np.ndarray], teacher: MaskedTeacher) -> SkinConsistency:
    """
    Teacher-based skinning consistency.

    L1 and symmetric KL average the non-anchor frames against the anchor
    teacher; entropy averages all frames.

    Raises:
        RigError: TOO_FEW_FRAMES
    """
    if len(preds) < 2:
        raise RigError("TOO_FEW_FRAMES", "skin consistency needs at least one non-anchor frame")
    m, eps = teacher.mask, teacher.epsilon
    Y = renorm(teacher.weights, m, eps)
    W = [renorm(p, m, eps) for p in preds]
    return SkinConsistency(
        l1_bca=float(np.mean([masked_l1(w, Y, m) for w in W[1:]])),
        symkl_bca=float(np.mean([sym_kl(w, Y, m, eps) for w in W[1:]])),
        entropy=float(np.mean([masked_entropy(w, m, eps) for w in W])),
    )


def per_joint_variance(
    preds: Sequence[np.ndarray], frames: Optional[Sequence[int]] = None, epsilon: float = METRIC_EPS
) -> np.ndarray:
    """
    Weighted temporal variance per joint.

    ``Cons_j = sum_i var_ij * mean_ij / (sum_i mean_ij + eps)`` with population
    variance and mean over the selected frames (default: all).

    Raises:
        RigError: TOO_FEW_FRAMES
    """
    idx = list(range(len(preds))) if frames is None else list(frames)
    if len(idx) < 2:
        raise RigError("TOO_FEW_FRAMES", "per-joint variance needs at least two frames")
    P = np.stack([np.asarray(preds[k], dtype=np.float64) for k in idx])
    var = P.var(axis=0)
    mean = P.mean(axis=0)
    return (var * mean).sum(axis=0) / (mean.sum(axis=0) + epsilon)


def joint_delta(orig: np.ndarray, ft: np.ndarray) -> np.ndarray:
    """Per-joint improvement ``Cons_orig - Cons_ft``."""
    orig = np.asarray(orig, dtype=np.float64)
    ft = np.asarray(ft, dtype=np.float64)
    if orig.shape != ft.shape:
        raise RigError("SHAPE_MISMATCH", f"consistency vectors {orig.shape} and {ft.shape} differ")
    return orig - ft


def top_improved_joints(delta: np.ndarray, k: int = 5) -> List[int]:
    """Indices of the ``k`` largest improvements; equal values keep joint order."""
    order = np.argsort(-np.asarray(delta, dtype=np.float64), kind="stable")
    return [int(j) for j in order[:k]]


def skin_static_quality(pred: np.ndarray, gt: np.ndarray, threshold: float = 1e-4) -> Dict[str, float]:
    """
    Static skinning precision, recall and mean per-vertex L1.

    A joint influences a vertex when its weight exceeds ``threshold``.
    Precision and recall are pooled over all vertices (0 when undefined).
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise RigError("SHAPE_MISMATCH", f"predicted {pred.shape} and ground-truth {gt.shape} weights differ")
    p_on = pred > threshold
    g_on = gt > threshold
    tp = int((p_on & g_on).sum())
    n_pred, n_gt = int(p_on.sum()), int(g_on.sum())
    return {
        "precision": tp / n_pred if n_pred else 0.0,
        "recall": tp / n_gt if n_gt else 0.0,
        "l1": float(np.abs(pred - gt).sum(axis=1).mean()),
    }
