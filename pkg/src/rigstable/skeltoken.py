"""
Skeleton token codec and token-space consistency losses.

A skeleton with J joints becomes 4J tokens: for every joint the quantized
x, y, z coordinates (1-based bins over [-0.5, 0.5]) followed by its parent
label (0 = root). Losses consume precomputed per-position scores; nothing here
runs a generative model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .errors import RigError
from .rig_types import Skeleton, frozen_array

logger = logging.getLogger(__name__)

__all__ = [
    "TokenSequence",
    "SlotLogits",
    "TokenLossWeights",
    "TokenLossBreakdown",
    "DEFAULT_N_DISC",
    "tokenize",
    "detokenize",
    "slot_vocab_sizes",
    "target_classes",
    "slot_weights",
    "cross_entropy",
    "weighted_ce",
    "token_loss",
    "subsample_frames",
]

DEFAULT_N_DISC = 256
PARENT_SLOT = 3


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """(J, 4) quadruples ``(t_x, t_y, t_z, t_p)`` and the coordinate bin count."""
    quads: np.ndarray
    n_disc: int = DEFAULT_N_DISC

    def __post_init__(self) -> None:
        quads = frozen_array(self.quads, np.int64)
        if quads.ndim != 2 or quads.shape[1] != 4:
            raise RigError("SHAPE_MISMATCH", f"token quads must be J x 4, got shape {quads.shape}")
        object.__setattr__(self, "quads", quads)

    @property
    def joint_count(self) -> int:
        return int(self.quads.shape[0])

    def __len__(self) -> int:
        return 4 * self.joint_count

    def flat(self) -> np.ndarray:
        """Flattened stream of length 4J in emission order."""
        return self.quads.reshape(-1)

    @classmethod
    def from_flat(cls, tokens: Sequence[int], n_disc: int = DEFAULT_N_DISC) -> TokenSequence:
        arr = np.asarray(tokens, dtype=np.int64)
        if arr.size % 4:
            raise RigError("SHAPE_MISMATCH", f"token stream length {arr.size} is not a multiple of 4")
        return cls(arr.reshape(-1, 4), n_disc=n_disc)


@dataclass(frozen=True, eq=False)
class SlotLogits:
    """
    Raw per-position scores (log domain) plus the set of positions to score.

    ``positions`` holds 0-based flattened positions; None means every position.
    """
    scores: Tuple[np.ndarray, ...]
    positions: Optional[FrozenSet[int]] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "scores", tuple(frozen_array(s, np.float64).reshape(-1) for s in self.scores)
        )
        if self.positions is not None:
            object.__setattr__(self, "positions", frozenset(int(i) for i in self.positions))

    def __len__(self) -> int:
        return len(self.scores)

    def active_positions(self) -> List[int]:
        if self.positions is None:
            return list(range(len(self.scores)))
        return sorted(self.positions)

    @classmethod
    def uniform(cls, vocab_sizes: Sequence[int]) -> SlotLogits:
        return cls(tuple(np.zeros(v) for v in vocab_sizes))

    @classmethod
    def one_hot(cls, targets: TokenSequence, confidence: float = 30.0) -> SlotLogits:
        """Scores of ``confidence`` on each target class and 0 elsewhere."""
        sizes = slot_vocab_sizes(targets.n_disc, targets.joint_count)
        classes = target_classes(targets)
        scores = []
        for size, cls_idx in zip(sizes, classes):
            s = np.zeros(size)
            s[cls_idx] = confidence
            scores.append(s)
        return cls(tuple(scores))


@dataclass(frozen=True)
class TokenLossWeights:
    """Parent-slot weight and the two token loss coefficients."""
    alpha: float = 3.0
    lambda_anchor: float = 1.0
    lambda_sym: float = 1.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.alpha) or self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        for name in ("lambda_anchor", "lambda_sym"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


@dataclass(frozen=True)
class TokenLossBreakdown:
    total: float
    anchor_term: float
    sym_term: float
    per_frame: Tuple[float, ...] = field(default_factory=tuple)

    def as_dict(self) -> Dict[str, float]:
        return {"total": self.total, "anchor": self.anchor_term, "sym": self.sym_term}


def tokenize(skeleton: Skeleton, n_disc: int = DEFAULT_N_DISC) -> TokenSequence:
    """
    Quantize a skeleton into token quadruples.

    Coordinate ``c`` maps to ``clamp(floor((c + 0.5) * n_disc), 0, n_disc - 1) + 1``;
    the parent label is copied as is. Joints keep their stored order.

    Raises:
        ValueError: n_disc < 2
        RigError: NONFINITE_COORDINATE
    """
    if n_disc < 2:
        raise ValueError(f"n_disc must be >= 2, got {n_disc}")
    X = skeleton.joints
    if not np.all(np.isfinite(X)):
        raise RigError("NONFINITE_COORDINATE", "cannot tokenize non-finite joint coordinates")
    bins = np.clip(np.floor((X + 0.5) * n_disc), 0, n_disc - 1).astype(np.int64) + 1
    quads = np.concatenate([bins, skeleton.parents.reshape(-1, 1)], axis=1)
    return TokenSequence(quads, n_disc=n_disc)


def detokenize(tokens: TokenSequence) -> Skeleton:
    """
    Decode token quadruples to bin-center coordinates and parent labels.

    Raises:
        RigError: TOKEN_OUT_OF_RANGE, PARENT_INDEX_OUT_OF_RANGE
    """
    n = tokens.n_disc
    coords = tokens.quads[:, :3]
    parents = tokens.quads[:, 3]
    J = tokens.joint_count
    if coords.size and (coords.min() < 1 or coords.max() > n):
        raise RigError("TOKEN_OUT_OF_RANGE", f"coordinate tokens must lie in 1..{n}")
    if parents.size and (parents.min() < 0 or parents.max() > J):
        raise RigError("PARENT_INDEX_OUT_OF_RANGE", f"parent tokens must lie in 0..{J}")
    joints = ((coords - 1) + 0.5) / n - 0.5
    return Skeleton(joints=joints, parents=parents)


def slot_vocab_sizes(n_disc: int, joint_count: int) -> List[int]:
    """Vocabulary size of every flattened position: n_disc for coordinates, J+1 for parents."""
    return [joint_count + 1 if i % 4 == PARENT_SLOT else n_disc for i in range(4 * joint_count)]


def target_classes(targets: TokenSequence) -> np.ndarray:
    """Class index per flattened position (coordinate token - 1, parent token as is)."""
    flat = targets.flat().copy()
    coord = (np.arange(flat.size) % 4) != PARENT_SLOT
    flat[coord] -= 1
    return flat


def slot_weights(length: int, alpha: float) -> np.ndarray:
    """Per-position weights: ``alpha`` on parent slots, 1 elsewhere."""
    w = np.ones(length)
    w[PARENT_SLOT::4] = alpha
    return w


def cross_entropy(scores: np.ndarray, target: int) -> float:
    """``-log softmax(scores)[target]`` with max subtraction, floored at 0."""
    s = np.asarray(scores, dtype=np.float64)
    top = s.max()
    lse = top + np.log(np.exp(s - top).sum())
    return max(0.0, float(lse - s[target]))


def weighted_ce(logits: SlotLogits, targets: TokenSequence, alpha: float = 3.0) -> float:
    """
    Weighted token cross entropy over the active positions.

    ``sum_i w_i CE_i / sum_i w_i`` with ``w_i = alpha`` on parent slots. Serves
    both the anchor term (anchor scores) and the symmetric term (frame scores
    against anchor targets).

    Raises:
        ValueError: alpha < 1
        RigError: VOCAB_MISMATCH, EMPTY_POSITION_SET
    """
    if not np.isfinite(alpha) or alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    L = len(targets)
    if len(logits) != L:
        raise RigError("VOCAB_MISMATCH", f"{len(logits)} score positions for {L} target tokens")
    positions = logits.active_positions()
    if not positions:
        raise RigError("EMPTY_POSITION_SET", "no positions selected for the token loss")

    sizes = slot_vocab_sizes(targets.n_disc, targets.joint_count)
    classes = target_classes(targets)
    weights = slot_weights(L, alpha)
    num = 0.0
    den = 0.0
    for i in positions:
        if i < 0 or i >= L:
            raise RigError("VOCAB_MISMATCH", f"position {i} outside the token stream of length {L}")
        scores = logits.scores[i]
        if scores.size != sizes[i]:
            raise RigError(
                "VOCAB_MISMATCH",
                f"position {i} has {scores.size} scores, slot vocabulary is {sizes[i]}",
            )
        if not (0 <= classes[i] < sizes[i]):
            raise RigError("TOKEN_OUT_OF_RANGE", f"target token at position {i} is outside its vocabulary")
        num += weights[i] * cross_entropy(scores, int(classes[i]))
        den += weights[i]
    return num / den


def token_loss(
    anchor_logits: SlotLogits,
    frame_logits: Sequence[SlotLogits],
    targets: TokenSequence,
    weights: TokenLossWeights = TokenLossWeights(),
) -> TokenLossBreakdown:
    """
    Anchor cross entropy plus mean frame-to-anchor cross entropy.

    The frame list is used as given; an empty list makes the symmetric term 0.
    """
    anchor_term = weighted_ce(anchor_logits, targets, weights.alpha)
    per_frame = tuple(weighted_ce(fl, targets, weights.alpha) for fl in frame_logits)
    sym_term = float(np.mean(per_frame)) if per_frame else 0.0
    total = weights.lambda_anchor * anchor_term + weights.lambda_sym * sym_term
    logger.debug(f"Token loss over {len(per_frame)} frame(s): anchor={anchor_term:.6g} sym={sym_term:.6g}")
    return TokenLossBreakdown(total=total, anchor_term=anchor_term, sym_term=sym_term, per_frame=per_frame)


def subsample_frames(frame_count: int, max_frames: int, seed: int) -> List[int]:
    """
    Uniformly pick at most ``max_frames`` non-anchor frame indices.

    Returns all of ``1..frame_count-1`` when they fit, otherwise a sorted
    seeded draw without replacement.
    """
    candidates = np.arange(1, frame_count)
    if max_frames < 0:
        raise ValueError(f"max_frames must be >= 0, got {max_frames}")
    if candidates.size <= max_frames:
        return candidates.tolist()
    rng = np.random.default_rng(seed)
    picked = rng.choice(candidates, size=max_frames, replace=False)
    return sorted(int(i) for i in picked)
