"""
Metric reports: per-clip evaluation, ordered aggregation and JSON/CSV/Markdown output.

Per-clip values are rounded to the report precision before aggregation, so a
mean recomputed from the CSV rows reproduces the reported aggregate exactly.
Clips are ordered by ``clip_id`` whatever order they were evaluated in.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from .errors import RigError
from .rig_types import RigClip
from .rigmetrics import (
    DEFAULT_N_EIGS,
    DEFAULT_SAMPLES_PER_BONE,
    blrd,
    chamfer_static,
    gsd,
    jad,
    mpjpe_anchor,
    per_joint_variance,
    pjdd,
    skin_consistency,
    skin_static_quality,
)
from .skinops import DEFAULT_EPSILON, build_masked_teacher

logger = logging.getLogger(__name__)

__all__ = [
    "ReportKind",
    "SKELETON_COLUMNS",
    "SKIN_COLUMNS",
    "CHAMFER_MODES",
    "COLUMN_LABELS",
    "SkipRecord",
    "ClipMetrics",
    "AggregateMetrics",
    "MetricReport",
    "LossReport",
    "FinetuneReport",
    "round_sig",
    "evaluate_skeleton_clip",
    "evaluate_skin_clip",
    "build_report",
    "report_to_json",
    "report_to_csv",
    "report_to_markdown",
    "model_to_json",
]

ReportKind = Literal["skeleton", "skin"]

# metric columns after clip_id, frames, joints
SKELETON_COLUMNS = ("pjdd", "blrd", "gsd", "jad", "mpjpe", "cd_j2j", "cd_j2b", "cd_b2b")
CHAMFER_MODES = {"cd_j2j": "J2J", "cd_j2b": "J2B", "cd_b2b": "B2B"}
SKIN_COLUMNS = ("l1_bca", "symkl_bca", "entropy", "precision", "recall", "static_l1")

COLUMN_LABELS = {
    "pjdd": "PJDD ↓", "blrd": "BLRD ↓", "gsd": "GSD ↓", "jad": "JAD ↓",
    "mpjpe": "MPJPE ↓", "cd_j2j": "CD-J2J ↓", "cd_j2b": "CD-J2B ↓", "cd_b2b": "CD-B2B ↓",
    "l1_bca": "L1 ↓", "symkl_bca": "SymKL ↓", "entropy": "Entropy",
    "precision": "Precision ↑", "recall": "Recall ↑", "static_l1": "Static L1 ↓",
}


class SkipRecord(BaseModel):
    """A clip left out of the report, with the reason code."""
    clip_id: str = Field(..., description="Skipped clip")
    code: str = Field(..., description="Stable reason code")
    message: str = Field(default="", description="Human-readable reason")


class ClipMetrics(BaseModel):
    """Metric values for one clip."""
    clip_id: str = Field(..., description="Clip identifier")
    frames: int = Field(..., description="Frame count including the anchor")
    joints: int = Field(..., description="Anchor joint count")
    metrics: Dict[str, float] = Field(default_factory=dict, description="Metric name -> value")
    cons_j: List[float] = Field(default_factory=list, description="Per-joint temporal variance of skin weights")


class AggregateMetrics(BaseModel):
    """Dataset means over the evaluated clips."""
    clip_count: int = Field(..., description="Clips contributing to the means")
    skipped_count: int = Field(default=0, description="Clips skipped")
    means: Dict[str, float] = Field(default_factory=dict, description="Metric name -> mean")


class MetricReport(BaseModel):
    """Full evaluation report."""
    kind: ReportKind = Field(..., description="skeleton or skin")
    seed: int = Field(..., description="Global seed of the run")
    float_digits: int = Field(default=12, description="Significant digits of every value")
    params: Dict[str, Any] = Field(default_factory=dict, description="Effective parameters")
    clips: List[ClipMetrics] = Field(default_factory=list, description="Per-clip rows ordered by clip_id")
    skipped: List[SkipRecord] = Field(default_factory=list, description="Skipped clips ordered by clip_id")
    aggregate: AggregateMetrics = Field(..., description="Dataset means")

    @property
    def columns(self) -> Sequence[str]:
        return SKELETON_COLUMNS if self.kind == "skeleton" else SKIN_COLUMNS


class LossReport(BaseModel):
    """Loss evaluation for one clip."""
    kind: ReportKind = Field(..., description="skeleton or skin")
    clip_id: str = Field(..., description="Clip identifier")
    terms: Dict[str, float] = Field(..., description="Loss term name -> value")
    params: Dict[str, Any] = Field(default_factory=dict, description="Effective parameters")
    frames: List[Dict[str, Any]] = Field(default_factory=list, description="Per-frame breakdown")


class FinetuneReport(BaseModel):
    """Before/after skinning consistency of the toy fine-tuning demo."""
    clip_id: str = Field(..., description="Clip identifier")
    seed: int = Field(..., description="Model and sampling seed")
    params: Dict[str, Any] = Field(default_factory=dict, description="Effective parameters")
    before: Dict[str, float] = Field(..., description="Consistency before training")
    after: Dict[str, float] = Field(..., description="Consistency after training")
    reduction_pct: Dict[str, float] = Field(..., description="Relative reduction of l1_bca and symkl_bca")
    cons_before: List[float] = Field(default_factory=list, description="Per-joint Cons_j of the initial predictor")
    cons_after: List[float] = Field(default_factory=list, description="Per-joint Cons_j after fine-tuning")
    joint_delta: List[float] = Field(default_factory=list, description="Per-joint Cons_orig - Cons_ft")
    top_improved_joints: List[int] = Field(default_factory=list, description="Joints with the largest delta")
    ablation: Optional[Dict[str, List[float]]] = Field(default=None, description="Final symkl_bca per variant")


def round_sig(value: float, digits: int = 12) -> float:
    """Round to ``digits`` significant digits; non-finite values pass through."""
    value = float(value)
    if not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def _skip(clip: RigClip, code: str, message: str) -> SkipRecord:
    logger.warning(f"Skipping clip {clip.clip_id!r}: {code}: {message}")
    return SkipRecord(clip_id=clip.clip_id, code=code, message=message)


def evaluate_skeleton_clip(
    clip: RigClip,
    n_eigs: int = DEFAULT_N_EIGS,
    reference: Optional[RigClip] = None,
    samples_per_bone: int = DEFAULT_SAMPLES_PER_BONE,
) -> Union[ClipMetrics, SkipRecord]:
    """
    Temporal skeleton metrics for one clip, or the reason it was skipped.

    Clips whose joint count varies across frames are skipped, never padded.
    With a ``reference`` clip, anchor MPJPE and the static Chamfer distance in every
    ``CHAMFER_MODES`` mode against its anchor are added.
    """
    J = clip.anchor.joint_count
    if any(s.joint_count != J for s in clip.skeleton_frames):
        return _skip(clip, "JOINT_COUNT_VARIES", "joint count differs across frames")
    try:
        metrics = {"pjdd": pjdd(clip), "blrd": blrd(clip), "gsd": gsd(clip, n_eigs), "jad": jad(clip)}
        if reference is not None:
            metrics["mpjpe"] = mpjpe_anchor(clip.anchor, reference.anchor)
            for column, mode in CHAMFER_MODES.items():
                metrics[column] = chamfer_static(clip.anchor, reference.anchor, mode, samples_per_bone)
    except RigError as e:
        return _skip(clip, e.code, e.message)
    logger.info(f"Evaluated skeleton metrics for {clip.clip_id!r}")
    return ClipMetrics(clip_id=clip.clip_id, frames=clip.frame_count, joints=J, metrics=metrics)


def evaluate_skin_clip(
    clip: RigClip,
    teacher_weights: Optional[np.ndarray] = None,
    k_s: int = 4,
    gamma: float = 0.0,
    epsilon: float = DEFAULT_EPSILON,
    threshold: float = 1e-4,
) -> Union[ClipMetrics, SkipRecord]:
    """
    Per-vertex skinning consistency for one clip.

    Predictions are the clip's per-frame skin weights; the teacher defaults to
    its anchor-frame weights. Static quality compares the anchor prediction
    with the teacher; ``cons_j`` is the per-joint temporal variance over all frames.
    """
    if not clip.skin_weights:
        return _skip(clip, "NO_SKIN_WEIGHTS", "clip carries no skin weights")
    teacher_w = clip.skin_weights[0] if teacher_weights is None else np.asarray(teacher_weights, dtype=np.float64)
    try:
        if teacher_w.shape != clip.skin_weights[0].shape:
            raise RigError(
                "SHAPE_MISMATCH",
                f"teacher weights {teacher_w.shape} do not match predictions {clip.skin_weights[0].shape}",
            )
        teacher = build_masked_teacher(teacher_w, clip.valid_joints(), k_s=k_s, gamma=gamma, epsilon=epsilon)
        cons = skin_consistency(list(clip.skin_weights), teacher)
        static = skin_static_quality(clip.skin_weights[0], teacher_w, threshold)
        cons_j = per_joint_variance(list(clip.skin_weights))
    except RigError as e:
        return _skip(clip, e.code, e.message)
    metrics = dict(cons.as_dict())
    metrics.update(precision=static["precision"], recall=static["recall"], static_l1=static["l1"])
    logger.info(f"Evaluated skin metrics for {clip.clip_id!r}")
    return ClipMetrics(
        clip_id=clip.clip_id, frames=clip.frame_count, joints=int(teacher_w.shape[1]), metrics=metrics,
        cons_j=[float(c) for c in cons_j],
    )


def build_report(
    kind: ReportKind,
    results: Sequence[Union[ClipMetrics, SkipRecord]],
    seed: int,
    float_digits: int = 12,
    params: Optional[Dict[str, Any]] = None,
) -> MetricReport:
    """
    Assemble a report from per-clip results in any order.

    Raises:
        RigError: DUPLICATE_CLIP_ID when two results share a clip_id
    """
    ids = [r.clip_id for r in results]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise RigError("DUPLICATE_CLIP_ID", f"clip ids appear more than once: {dupes}")

    rows = sorted((r for r in results if isinstance(r, ClipMetrics)), key=lambda r: r.clip_id)
    skipped = sorted((r for r in results if isinstance(r, SkipRecord)), key=lambda r: r.clip_id)
    rounded = [
        r.model_copy(update={
            "metrics": {k: round_sig(v, float_digits) for k, v in r.metrics.items()},
            "cons_j": [round_sig(c, float_digits) for c in r.cons_j],
        })
        for r in rows
    ]
    columns = SKELETON_COLUMNS if kind == "skeleton" else SKIN_COLUMNS
    means: Dict[str, float] = {}
    for col in columns:
        values = [r.metrics[col] for r in rounded if col in r.metrics]
        if values:
            means[col] = round_sig(math.fsum(values) / len(values), float_digits)
    return MetricReport(
        kind=kind,
        seed=seed,
        float_digits=float_digits,
        params=dict(params or {}),
        clips=rounded,
        skipped=skipped,
        aggregate=AggregateMetrics(clip_count=len(rounded), skipped_count=len(skipped), means=means),
    )


def model_to_json(model: BaseModel) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(model.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def report_to_json(report: MetricReport) -> str:
    return model_to_json(report)


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def report_to_csv(report: MetricReport) -> str:
    """
    One row per evaluated clip.

    Columns: ``clip_id, frames, joints`` then the kind's metric columns
    (``SKELETON_COLUMNS`` or ``SKIN_COLUMNS``); metrics a clip lacks are empty.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["clip_id", "frames", "joints", *report.columns])
    for row in report.clips:
        writer.writerow([row.clip_id, row.frames, row.joints, *(_cell(row.metrics.get(c)) for c in report.columns)])
    return buf.getvalue()


def report_to_markdown(report: MetricReport) -> str:
    """Results table with one row per clip and a closing mean row."""
    cols = [c for c in report.columns if c in report.aggregate.means]
    lines = [
        "| Clip | " + " | ".join(COLUMN_LABELS[c] for c in cols) + " |",
        "|---|" + "---:|" * len(cols),
    ]
    for row in report.clips:
        cells = [f"{row.metrics[c]:.4f}" if c in row.metrics else "" for c in cols]
        lines.append(f"| {row.clip_id} | " + " | ".join(cells) + " |")
    means = [f"{report.aggregate.means[c]:.4f}" for c in cols]
    lines.append("| **Mean** | " + " | ".join(means) + " |")
    if report.skipped:
        lines.append("")
        lines.append("Skipped: " + ", ".join(f"{s.clip_id} ({s.code})" for s in report.skipped))
    return "\n".join(lines) + "\n"
