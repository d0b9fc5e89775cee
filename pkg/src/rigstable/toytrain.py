"""
Desk-scale skinning fine-tuning demo.

A softmax-linear head over fixed random Fourier features of the 6-D query
(position, normal) is trained with the skinning objective by plain gradient
descent, and skinning consistency is measured before and after.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DivergedError, RigError
from .rig_types import RigClip, frozen_array
from .rigmetrics import (
    SkinConsistency,
    joint_delta,
    per_joint_variance,
    skin_consistency,
)
from .skinloss import (
    SkinBatch,
    SkinLossBreakdown,
    SkinLossWeights,
    geometric_prior,
    skin_loss_gradient,
)
from .skinops import (
    MaskedTeacher,
    SurfaceSamples,
    barycentric_transfer,
    build_masked_teacher,
    masked_softmax,
    sample_surface,
)

logger = logging.getLogger(__name__)

__all__ = [
    "QUERY_DIM",
    "ToyModelParams",
    "TrainOptions",
    "SkinProblem",
    "FinetuneResult",
    "init_toy_model",
    "predict",
    "prepare_skin_problem",
    "finetune",
    "ablation_sweep",
    "ABLATION_VARIANTS",
]

QUERY_DIM = 6

# name -> weight zeroed in that variant
ABLATION_VARIANTS: Dict[str, Optional[str]] = {
    "full": None,
    "no_sym": "lambda_sym",
    "no_l1": "lambda_1",
    "no_anchor": "lambda_anchor",
    "no_ent": "lambda_ent",
    "no_prior": "lambda_prior",
}


@dataclass(frozen=True, eq=False)
class ToyModelParams:
    """
    Toy skinning predictor.

    ``W[i] = softmax over valid joints of A @ cos(Omega @ u_i + phase)``.

    Attributes:
        weights: head A, shape (J, F)
        frequencies: Omega, shape (F, 6)
        phases: shape (F,)
        valid: (J,) valid-joint mask
    """
    weights: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", frozen_array(self.weights))
        object.__setattr__(self, "frequencies", frozen_array(self.frequencies))
        object.__setattr__(self, "phases", frozen_array(self.phases).reshape(-1))
        object.__setattr__(self, "valid", frozen_array(self.valid, bool).reshape(-1))
        J, F = self.weights.shape
        if self.frequencies.shape != (F, QUERY_DIM) or self.phases.shape != (F,):
            raise RigError("SHAPE_MISMATCH", f"feature map must be ({F}, {QUERY_DIM}) frequencies and ({F},) phases")
        if self.valid.shape != (J,):
            raise RigError("SHAPE_MISMATCH", f"valid mask must have {J} entries")

    @property
    def feature_count(self) -> int:
        return int(self.weights.shape[1])

    def features(self, U: np.ndarray) -> np.ndarray:
        """(N, F) random Fourier features of (N, 6) queries."""
        U = np.asarray(U, dtype=np.float64)
        if U.ndim != 2 or U.shape[1] != QUERY_DIM:
            raise RigError("SHAPE_MISMATCH", f"queries must be N x {QUERY_DIM}, got shape {U.shape}")
        return np.cos(U @ self.frequencies.T + self.phases)

    def predict_from_features(self, phi: np.ndarray) -> np.ndarray:
        return masked_softmax(phi @ self.weights.T, self.valid)

    def with_weights(self, weights: np.ndarray) -> ToyModelParams:
        return replace(self, weights=weights)


def init_toy_model(
    joint_count: int,
    valid: Optional[np.ndarray] = None,
    n_features: int = 64,
    freq_scale: float = 4.0,
    init_scale: float = 0.01,
    seed: int = 42,
) -> ToyModelParams:
    """Seeded toy model with ``Omega ~ N(0, freq_scale^2)``, uniform phases and small random head."""
    rng = np.random.default_rng(seed)
    frequencies = rng.normal(0.0, freq_scale, size=(n_features, QUERY_DIM))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
    weights = rng.normal(0.0, init_scale, size=(joint_count, n_features))
    if valid is None:
        valid = np.ones(joint_count, dtype=bool)
    return ToyModelParams(weights=weights, frequencies=frequencies, phases=phases, valid=valid)


def predict(model: ToyModelParams, U: np.ndarray) -> np.ndarray:
    """Row-stochastic (N, J) weights; invalid joints are exactly 0."""
    return model.predict_from_features(model.features(U))


@dataclass(frozen=True)
class TrainOptions:
    """Gradient descent settings; ``lr`` is per sampled point."""
    lr: float = 0.05
    steps: int = 200
    seed: int = 42
    n_features: int = 64
    freq_scale: float = 4.0
    init_scale: float = 0.01

    def __post_init__(self) -> None:
        if not np.isfinite(self.lr) or self.lr < 0:
            raise ValueError(f"lr must be finite and non-negative, got {self.lr}")
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.n_features < 1:
            raise ValueError(f"n_features must be >= 1, got {self.n_features}")


@dataclass(frozen=True, eq=False)
class SkinProblem:
    """Samples and the masked point teacher derived from a clip's anchor weights."""
    samples: SurfaceSamples
    teacher: MaskedTeacher


@dataclass(frozen=True, eq=False)
class FinetuneResult:
    """
    Outcome of ``finetune``.

    ``trace[s]`` is the loss breakdown after ``s`` updates (``steps + 1`` entries).
    """
    trace: Tuple[SkinLossBreakdown, ...]
    before: SkinConsistency
    after: SkinConsistency
    cons_before: np.ndarray
    cons_after: np.ndarray
    delta: np.ndarray
    model: ToyModelParams

    def trace_rows(self) -> List[Dict[str, float]]:
        return [dict(step=s, **b.as_dict()) for s, b in enumerate(self.trace)]


def prepare_skin_problem(
    clip: RigClip,
    n_samples: int = 1024,
    seed: int = 42,
    k_s: int = 4,
    gamma: float = 0.0,
    epsilon: float = 1e-8,
    min_valid_joints: int = 1,
    vertex_teacher: Optional[np.ndarray] = None,
) -> SkinProblem:
    """
    Sample the clip surface and transfer the anchor vertex teacher to the samples.

    The vertex teacher defaults to the clip's anchor-frame skin weights.

    Raises:
        RigError: NO_SKIN_WEIGHTS, NO_MESH, NO_VALID_JOINTS
    """
    if vertex_teacher is None:
        if not clip.skin_weights:
            raise RigError("NO_SKIN_WEIGHTS", f"clip {clip.clip_id!r} carries no skin weights for the teacher")
        vertex_teacher = clip.skin_weights[0]
    samples = sample_surface(clip, n_samples, seed)
    point_teacher = barycentric_transfer(vertex_teacher, samples)
    teacher = build_masked_teacher(
        point_teacher, clip.valid_joints(), k_s=k_s, gamma=gamma, epsilon=epsilon,
        min_valid_joints=min_valid_joints,
    )
    return SkinProblem(samples=samples, teacher=teacher)


def _predictions(model: ToyModelParams, feats: Sequence[np.ndarray]) -> List[np.ndarray]:
    return [model.predict_from_features(phi) for phi in feats]


def finetune(
    clip: RigClip,
    teacher: MaskedTeacher,
    weights: SkinLossWeights,
    opts: TrainOptions,
    samples: SurfaceSamples,
    model: Optional[ToyModelParams] = None,
) -> FinetuneResult:
    """
    Plain gradient descent on the skinning objective.

    Step ``s`` uses epoch ``s`` for the prior warmup and updates
    ``A -= lr * grad / N``. The geometric prior is built once from the anchor
    skeleton.

    Args:
        clip: Clip whose anchor skeleton defines the prior bones
        teacher: Masked point teacher on ``samples``
        weights: Loss coefficients
        opts: Learning rate, step count, model seed
        samples: Surface samples the teacher was built on
        model: Starting model (default: ``init_toy_model`` from ``opts``)

    Raises:
        DivergedError: DIVERGED when the loss or gradient stops being finite
    """
    if teacher.weights.shape[0] != samples.count:
        raise RigError("SHAPE_MISMATCH", f"teacher has {teacher.weights.shape[0]} rows for {samples.count} samples")
    if model is None:
        model = init_toy_model(
            teacher.weights.shape[1], teacher.valid, opts.n_features, opts.freq_scale, opts.init_scale, opts.seed,
        )
    prior = geometric_prior(samples, clip.anchor, teacher.valid, weights.beta, weights.prior_window)
    feats = [model.features(samples.query_matrix(k)) for k in range(samples.frame_count)]

    preds0 = _predictions(model, feats)
    before = skin_consistency(preds0, teacher)
    cons_before = per_joint_variance(preds0)

    n = samples.count
    trace: List[SkinLossBreakdown] = []
    for step in range(opts.steps + 1):
        batch = SkinBatch(samples=samples, teacher=teacher, prior=prior, weights=weights, epoch=step)
        try:
            grad, loss = skin_loss_gradient(model, batch)
        except RigError as e:
            raise DivergedError("DIVERGED", f"step {step}: {e.message}", trace=tuple(trace)) from e
        if not np.isfinite(loss.total):
            raise DivergedError("DIVERGED", f"non-finite loss at step {step}", trace=tuple(trace))
        trace.append(loss)
        if step == opts.steps:
            break
        model = model.with_weights(model.weights - opts.lr * grad / n)
        if step % 50 == 0:
            logger.debug(f"step {step}: total={loss.total:.6g} sym={loss.sym:.6g}")

    preds1 = _predictions(model, feats)
    after = skin_consistency(preds1, teacher)
    cons_after = per_joint_variance(preds1)
    logger.info(
        f"Finetune {clip.clip_id!r}: symkl {before.symkl_bca:.6g} -> {after.symkl_bca:.6g}, "
        f"l1 {before.l1_bca:.6g} -> {after.l1_bca:.6g}"
    )
    return FinetuneResult(
        trace=tuple(trace),
        before=before,
        after=after,
        cons_before=cons_before,
        cons_after=cons_after,
        delta=joint_delta(cons_before, cons_after),
        model=model,
    )


def ablation_sweep(
    clip: RigClip,
    teacher: MaskedTeacher,
    weights: SkinLossWeights,
    opts: TrainOptions,
    samples: SurfaceSamples,
    seeds: Sequence[int] = (0, 1, 2),
    variants: Optional[Sequence[str]] = None,
) -> Dict[str, List[float]]:
    """
    Final ``symkl_bca`` per seed for the full loss and each single-weight-zeroed variant.

    Returns:
        Mapping variant name -> list of final values in ``seeds`` order
    """
    names = list(ABLATION_VARIANTS) if variants is None else list(variants)
    unknown = [n for n in names if n not in ABLATION_VARIANTS]
    if unknown:
        raise ValueError(f"unknown ablation variant(s): {unknown}")
    out: Dict[str, List[float]] = {}
    for name in names:
        zeroed = ABLATION_VARIANTS[name]
        w = weights if zeroed is None else weights.with_overrides(**{zeroed: 0.0})
        results = []
        for seed in seeds:
            res = finetune(clip, teacher, w, replace(opts, seed=int(seed)), samples)
            results.append(res.after.symkl_bca)
        out[name] = results
        logger.info(f"Ablation {name}: {results}")
    return out
