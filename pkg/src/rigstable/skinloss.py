"""
Articulation-invariant skinning objective.

Consistency distillation (symmetric KL and L1 of every non-anchor frame to the
anchor teacher, L1 on the anchor frame) plus structural regularization
(masked entropy and KL to a time-averaged geometric proximity prior). All
terms are masked and averaged with ``skinops.masked_avg``.

``skin_loss_gradient`` differentiates the total analytically through the
renormalization operator and the masked softmax of the toy predictor.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import RigError
from .rig_types import Skeleton
from .skinops import (
    DEFAULT_EPSILON,
    MaskedTeacher,
    SurfaceSamples,
    masked_avg,
    masked_softmax,
    points_to_segments,
    renorm,
)

if TYPE_CHECKING:
    from .toytrain import ToyModelParams

logger = logging.getLogger(__name__)

__all__ = [
    "SkinLossWeights",
    "SkinLossBreakdown",
    "SkinBatch",
    "sym_kl",
    "masked_l1",
    "masked_entropy",
    "prior_kl",
    "bone_segments",
    "geometric_prior",
    "skin_total_loss",
    "skin_loss_gradient",
]


@dataclass(frozen=True)
class SkinLossWeights:
    """
    Skinning loss coefficients.

    ``prior_window`` lists the frames averaged into the geometric prior;
    None means every frame. The prior weight ramps linearly to
    ``lambda_prior`` over ``warmup_epochs``.
    """
    lambda_sym: float = 1.0
    lambda_1: float = 1.0
    lambda_anchor: float = 0.25
    lambda_ent: float = 0.02
    lambda_prior: float = 0.1
    beta: float = 15.0
    prior_window: Optional[Tuple[int, ...]] = None
    warmup_epochs: int = 5
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        for name in ("lambda_sym", "lambda_1", "lambda_anchor", "lambda_ent", "lambda_prior"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.warmup_epochs < 0:
            raise ValueError(f"warmup_epochs must be non-negative, got {self.warmup_epochs}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.prior_window is not None:
            window = tuple(int(k) for k in self.prior_window)
            if not window or min(window) < 0:
                raise ValueError("prior_window must be a nonempty list of frame indices")
            object.__setattr__(self, "prior_window", window)

    def prior_weight(self, epoch: int) -> float:
        """Effective prior coefficient ``lambda_prior * min(1, epoch / T)``."""
        if self.warmup_epochs == 0:
            return self.lambda_prior
        return self.lambda_prior * min(1.0, epoch / self.warmup_epochs)

    def with_overrides(self, **changes: object) -> SkinLossWeights:
        return replace(self, **changes)


@dataclass(frozen=True)
class SkinLossBreakdown:
    """Raw term values; ``total`` applies the weights (and prior warmup)."""
    total: float
    sym: float
    l1: float
    anchor: float
    ent: float
    prior: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "total": self.total, "sym": self.sym, "l1": self.l1,
            "anchor": self.anchor, "ent": self.ent, "prior": self.prior,
        }


@dataclass(frozen=True)
class SkinBatch:
    """Everything the gradient needs besides the model."""
    samples: SurfaceSamples
    teacher: MaskedTeacher
    prior: np.ndarray
    weights: SkinLossWeights = field(default_factory=SkinLossWeights)
    epoch: int = 0


def _pair(P: np.ndarray, Q: np.ndarray, m: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if P.shape != Q.shape or P.shape != m.shape:
        raise RigError("SHAPE_MISMATCH", f"shapes {P.shape}, {Q.shape} and mask {m.shape} must agree")
    return P, Q, m


def _log_floor(P: np.ndarray, eps: float) -> np.ndarray:
    return np.log(np.maximum(P, eps))


def sym_kl(P: np.ndarray, Q: np.ndarray, m: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> float:
    """Masked ``KL(P||Q) + KL(Q||P)`` with probabilities floored at ``epsilon`` inside logs."""
    P, Q, m = _pair(P, Q, m)
    f = (P - Q) * (_log_floor(P, epsilon) - _log_floor(Q, epsilon))
    return masked_avg(f, m)


def masked_l1(P: np.ndarray, Q: np.ndarray, m: np.ndarray) -> float:
    """Masked ``|P - Q|``."""
    P, Q, m = _pair(P, Q, m)
    return masked_avg(np.abs(P - Q), m)


def masked_entropy(P: np.ndarray, m: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> float:
    """Masked ``-P log P`` with the log argument floored at ``epsilon``."""
    P, _, m = _pair(P, P, m)
    return masked_avg(-P * _log_floor(P, epsilon), m)


def prior_kl(prior: np.ndarray, P: np.ndarray, m: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> float:
    """Masked ``KL(prior || P)`` for already renormalized inputs."""
    prior, P, m = _pair(prior, P, m)
    return masked_avg(prior * (_log_floor(prior, epsilon) - _log_floor(P, epsilon)), m)


def bone_segments(skeleton: Skeleton) -> Tuple[np.ndarray, np.ndarray]:
    """
    Segment endpoints per joint: joint ``j`` to its parent; roots get a point-bone.

    Returns:
        (A, B) arrays of shape (J, 3)
    """
    X = skeleton.joints
    A = X.copy()
    B = X.copy()
    for j in range(skeleton.joint_count):
        p = skeleton.parent_index(j)
        if p is not None and 0 <= p < skeleton.joint_count:
            B[j] = X[p]
    return A, B


def geometric_prior(
    samples: SurfaceSamples,
    skeleton: Skeleton,
    valid: np.ndarray,
    beta: float = 15.0,
    window: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Time-averaged exponential proximity prior.

    Per frame in ``window`` (default: all sample frames) each point gets a
    softmax of ``-beta * d`` over valid joints, ``d`` being the distance to
    the joint's bone in the shared anchor skeleton; the frames are averaged.

    Raises:
        RigError: NO_VALID_BONES, SHAPE_MISMATCH, FRAME_OUT_OF_RANGE
    """
    valid = np.asarray(valid, dtype=bool).reshape(-1)
    if valid.size != skeleton.joint_count:
        raise RigError("SHAPE_MISMATCH", f"valid mask has {valid.size} entries for {skeleton.joint_count} joints")
    if not valid.any():
        raise RigError("NO_VALID_BONES", "geometric prior needs at least one valid bone")
    frames = list(range(samples.frame_count)) if window is None else [int(k) for k in window]
    if not frames:
        raise RigError("FRAME_OUT_OF_RANGE", "prior window is empty")
    bad = [k for k in frames if not 0 <= k < samples.frame_count]
    if bad:
        raise RigError("FRAME_OUT_OF_RANGE", f"prior window frames {bad} not in 0..{samples.frame_count - 1}")

    A, B = bone_segments(skeleton)
    acc = np.zeros((samples.count, skeleton.joint_count))
    for k in frames:
        d = points_to_segments(samples.positions[k], A, B)
        acc += masked_softmax(-beta * d, valid)
    return acc / len(frames)


def _renormed(preds: Sequence[np.ndarray], teacher: MaskedTeacher) -> Tuple[List[np.ndarray], np.ndarray]:
    eps = teacher.epsilon
    W = [renorm(p, teacher.mask, eps) for p in preds]
    Y = renorm(teacher.weights, teacher.mask, eps)
    return W, Y


def skin_total_loss(
    preds: Sequence[np.ndarray],
    teacher: MaskedTeacher,
    prior: np.ndarray,
    weights: SkinLossWeights = SkinLossWeights(),
    epoch: int = 0,
) -> SkinLossBreakdown:
    """
    Total skinning loss for per-frame predictions (frame 0 = anchor).

    ``sym`` and ``l1`` average frames 1..K against the renormalized teacher,
    ``anchor`` is the masked L1 of frame 0, ``ent`` and ``prior`` sum over all
    frames. Both outer group weights are 1.

    Raises:
        RigError: NO_FRAMES, SHAPE_MISMATCH, ZERO_MASK
    """
    if not preds:
        raise RigError("NO_FRAMES", "skinning loss needs at least the anchor prediction")
    m = teacher.mask
    eps = weights.epsilon
    W, Y = _renormed(preds, teacher)
    Pi = renorm(prior, m, teacher.epsilon)

    later = W[1:]
    sym = float(np.mean([sym_kl(w, Y, m, eps) for w in later])) if later else 0.0
    l1 = float(np.mean([masked_l1(w, Y, m) for w in later])) if later else 0.0
    anchor = masked_l1(W[0], Y, m)
    ent = float(sum(masked_entropy(w, m, eps) for w in W))
    pri = float(sum(prior_kl(Pi, w, m, eps) for w in W))

    total = (
        weights.lambda_sym * sym
        + weights.lambda_1 * l1
        + weights.lambda_anchor * anchor
        + weights.lambda_ent * ent
        + weights.prior_weight(epoch) * pri
    )
    return SkinLossBreakdown(total=total, sym=sym, l1=l1, anchor=anchor, ent=ent, prior=pri)


def _renorm_backward(G: np.ndarray, What: np.ndarray, support: np.ndarray, eps: float) -> np.ndarray:
    s = support.astype(np.float64)
    S = (What * s).sum(axis=1, keepdims=True) + eps
    inner = (G * What * s).sum(axis=1, keepdims=True)
    return s * (G / S - inner / S ** 2)


def _softmax_backward(g: np.ndarray, What: np.ndarray) -> np.ndarray:
    return What * (g - (What * g).sum(axis=1, keepdims=True))


def skin_loss_gradient(model: ToyModelParams, batch: SkinBatch) -> Tuple[np.ndarray, SkinLossBreakdown]:
    """
    Exact gradient of ``skin_total_loss`` with respect to the toy head weights.

    The mask and teacher are constants. Derivatives of floored logs vanish
    where the argument sits at the floor.

    Args:
        model: Toy predictor (head weights ``A`` of shape (J, F))
        batch: Samples, teacher, prior, weights and epoch

    Returns:
        (dL/dA with shape (J, F), loss breakdown at ``model``)

    Raises:
        RigError: NONFINITE_GRADIENT
    """
    teacher, w = batch.teacher, batch.weights
    m = teacher.mask
    support = m > 0
    eps_r = teacher.epsilon
    eps = w.epsilon
    n_frames = batch.samples.frame_count
    K = n_frames - 1
    c = m.shape[0] / float(m.sum())

    feats = [model.features(batch.samples.query_matrix(k)) for k in range(n_frames)]
    What = [model.predict_from_features(phi) for phi in feats]
    breakdown = skin_total_loss(What, teacher, batch.prior, w, batch.epoch)

    W = [renorm(p, m, eps_r) for p in What]
    Y = renorm(teacher.weights, m, eps_r)
    Pi = renorm(batch.prior, m, eps_r)
    ly = _log_floor(Y, eps)
    lam_prior = w.prior_weight(batch.epoch)

    grad = np.zeros_like(model.weights)
    for k in range(n_frames):
        Wk = W[k]
        lw = _log_floor(Wk, eps)
        above = Wk > eps
        inv = np.divide(above.astype(np.float64), Wk, out=np.zeros_like(Wk), where=above)
        d = w.lambda_ent * (-lw - above)
        d = d + lam_prior * (-Pi * inv)
        if k == 0:
            d = d + w.lambda_anchor * np.sign(Wk - Y)
        else:
            d = d + (w.lambda_sym / K) * ((lw - ly) + (Wk - Y) * inv)
            d = d + (w.lambda_1 / K) * np.sign(Wk - Y)
        G = c * m * d
        g_hat = _renorm_backward(G, What[k], support, eps_r)
        g_z = _softmax_backward(g_hat, What[k])
        grad += g_z.T @ feats[k]

    if not np.all(np.isfinite(grad)):
        raise RigError("NONFINITE_GRADIENT", "skinning loss gradient is not finite")
    return grad, breakdown
