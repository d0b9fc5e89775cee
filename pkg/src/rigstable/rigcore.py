"""
Skeleton graph utilities and clip validation.

Provides the anchor minimum spanning tree used by the bone-graph metrics,
hop distances on the joint tree, parent-convention normalization, anchor
bounding-box normalization and per-clip random stream derivation.
"""
from __future__ import annotations

import hashlib
import logging
from typing import Any, List, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import RigError
from .rig_types import (
    JointTreeDistances,
    MeshFrame,
    RigClip,
    Skeleton,
    ValidationReport,
    Violation,
)

logger = logging.getLogger(__name__)

__all__ = [
    "validate_clip",
    "anchor_mst",
    "tree_distances",
    "normalize_parents",
    "find_cycle_joints",
    "bbox_normalize",
    "clip_rng",
    "clip_seed_sequence",
]

# Relative tolerance under which two MST candidate weights count as tied
MST_TIE_RTOL = 1e-12
ROW_SUM_TOL = 1e-6


def normalize_parents(parents: Sequence[int]) -> np.ndarray:
    """
    Convert self-parented roots (``parents[j] == j + 1``) to the 0-root convention.

    Args:
        parents: 1-based parent labels

    Returns:
        New int64 array with self references replaced by 0
    """
    arr = np.array(parents, dtype=np.int64, copy=True).reshape(-1)
    self_ref = arr == np.arange(1, arr.size + 1)
    if self_ref.any():
        logger.debug(f"Converted {int(self_ref.sum())} self-parented root(s) to 0")
    arr[self_ref] = 0
    return arr


def find_cycle_joints(parents: np.ndarray) -> List[int]:
    """
    Joints whose parent chain never reaches a root within J steps.

    Out-of-range labels and self references are treated as chain ends here;
    they are reported separately by validation.
    """
    J = int(parents.size)
    cyclic: List[int] = []
    for j in range(J):
        cur = j
        for _ in range(J + 1):
            p = int(parents[cur])
            if p <= 0 or p > J or p - 1 == cur:
                break
            cur = p - 1
        else:
            cyclic.append(j)
    return cyclic


def _validate_skeleton(skel: Skeleton, frame: int) -> List[Violation]:
    out: List[Violation] = []
    J = skel.joint_count
    if not np.all(np.isfinite(skel.joints)):
        out.append(Violation("NONFINITE_COORDINATE", "joint coordinates must be finite", frame))
    bad = np.flatnonzero((skel.parents < 0) | (skel.parents > J))
    if bad.size:
        out.append(Violation(
            "PARENT_OUT_OF_RANGE",
            f"parent labels must lie in 0..{J}; offending joints {bad.tolist()}",
            frame,
        ))
    self_ref = np.flatnonzero(skel.parents == np.arange(1, J + 1))
    if self_ref.size:
        out.append(Violation(
            "SELF_PARENT",
            f"joints {self_ref.tolist()} are their own parent; use 0 for roots",
            frame,
        ))
    cyclic = find_cycle_joints(skel.parents)
    if cyclic:
        out.append(Violation("CYCLE", f"parent cycle through joints {cyclic}", frame))
    n_roots = int(np.sum(skel.parents == 0))
    if n_roots == 0 and not cyclic:
        out.append(Violation("NO_ROOT", "skeleton has no root joint", frame))
    elif n_roots > 1:
        out.append(Violation(
            "MULTI_ROOT", f"skeleton has {n_roots} roots", frame, severity="warning",
        ))
    return out


def validate_clip(clip: RigClip) -> ValidationReport:
    """
    Collect every invariant violation of ``clip``.

    Violations are data: nothing is raised and the clip is not modified.
    Multi-root skeletons are reported with ``severity="warning"``.

    Args:
        clip: Clip to check

    Returns:
        ValidationReport (empty when the clip is well formed)
    """
    found: List[Violation] = []
    for k, skel in enumerate(clip.skeleton_frames):
        found.extend(_validate_skeleton(skel, k))

    J = clip.anchor.joint_count
    varying = [k for k, s in enumerate(clip.skeleton_frames) if s.joint_count != J]
    if varying:
        found.append(Violation(
            "JOINT_COUNT_VARIES",
            f"frames {varying} differ from the anchor joint count {J}",
            severity="warning",
        ))

    n_frames = clip.frame_count
    n_v = None
    if clip.mesh_frames is not None:
        if len(clip.mesh_frames) != n_frames:
            found.append(Violation(
                "FRAME_COUNT_MISMATCH",
                f"{len(clip.mesh_frames)} mesh frames for {n_frames} skeleton frames",
            ))
        if clip.faces is None:
            found.append(Violation("MISSING_FACES", "mesh frames present without faces"))
        n_v = clip.mesh_frames[0].vertex_count if clip.mesh_frames else 0
        for k, mesh in enumerate(clip.mesh_frames):
            if mesh.vertex_count != n_v:
                found.append(Violation(
                    "TOPOLOGY_MISMATCH",
                    f"frame has {mesh.vertex_count} vertices, anchor has {n_v}",
                    k,
                ))
            if not np.all(np.isfinite(mesh.vertices)):
                found.append(Violation("NONFINITE_COORDINATE", "vertex coordinates must be finite", k))
        if n_v is not None and n_v < 3:
            found.append(Violation("TOO_FEW_VERTICES", f"mesh needs at least 3 vertices, got {n_v}"))

    if clip.faces is not None and n_v is not None and clip.faces.size:
        if clip.faces.min() < 0 or clip.faces.max() >= n_v:
            found.append(Violation(
                "FACE_INDEX_OUT_OF_RANGE", f"face indices must lie in 0..{n_v - 1}",
            ))

    if clip.valid_mask is not None and clip.valid_mask.shape != (J,):
        found.append(Violation(
            "VALID_MASK_LENGTH", f"valid_mask has {clip.valid_mask.size} entries for {J} joints",
        ))

    if clip.skin_weights is not None:
        if clip.valid_mask is not None and not clip.valid_mask.any():
            found.append(Violation("EMPTY_VALID_MASK", "skin data needs at least one valid joint"))
        if len(clip.skin_weights) != n_frames:
            found.append(Violation(
                "FRAME_COUNT_MISMATCH",
                f"{len(clip.skin_weights)} skin weight frames for {n_frames} skeleton frames",
            ))
        for k, w in enumerate(clip.skin_weights):
            expected = (n_v if n_v is not None else w.shape[0], J)
            if w.ndim != 2 or w.shape != expected:
                found.append(Violation(
                    "SKIN_SHAPE_MISMATCH", f"skin weights shape {w.shape}, expected {expected}", k,
                ))
                continue
            if not np.all(np.isfinite(w)) or (w < 0).any():
                found.append(Violation("SKIN_NOT_STOCHASTIC", "skin weights must be finite and >= 0", k))
            elif np.abs(w.sum(axis=1) - 1.0).max(initial=0.0) > ROW_SUM_TOL:
                found.append(Violation("SKIN_NOT_STOCHASTIC", "skin weight rows must sum to 1", k))

    if found:
        logger.debug(f"Clip {clip.clip_id!r}: {len(found)} violation(s)")
    return ValidationReport(tuple(found))


def _check_finite(points: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(points)):
        raise RigError("NONFINITE_COORDINATE", f"{what} contain non-finite coordinates")


def _mst_better(w: float, pair: Tuple[int, int], best_w: float, best_pair: Tuple[int, int]) -> bool:
    tol = MST_TIE_RTOL * max(abs(w), abs(best_w))
    if w < best_w - tol:
        return True
    if w > best_w + tol:
        return False
    return pair < best_pair


def anchor_mst(skeleton: Skeleton) -> List[Tuple[int, int]]:
    """
    Euclidean minimum spanning tree of the joints.

    Prim's algorithm seeded at joint 0. Candidate edges whose weights agree
    within a relative 1e-12 are tied and the smaller ``(min, max)`` index pair
    wins, so the edge set is reproducible bit for bit.

    Args:
        skeleton: Skeleton whose joints span the tree (parents are ignored)

    Returns:
        Sorted list of ``(i, j)`` pairs with ``i < j``; empty for a single joint

    Raises:
        RigError: NONFINITE_COORDINATE
    """
    X = skeleton.joints
    _check_finite(X, "joints")
    J = X.shape[0]
    if J == 1:
        return []

    dist = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1))
    in_tree = np.zeros(J, dtype=bool)
    in_tree[0] = True
    key_w = dist[0].copy()
    key_pair = [(0, j) for j in range(J)]
    edges: List[Tuple[int, int]] = []

    for _ in range(J - 1):
        pick = -1
        for j in range(J):
            if in_tree[j]:
                continue
            if pick < 0 or _mst_better(key_w[j], key_pair[j], key_w[pick], key_pair[pick]):
                pick = j
        in_tree[pick] = True
        edges.append(key_pair[pick])
        for j in range(J):
            if in_tree[j]:
                continue
            cand = (min(pick, j), max(pick, j))
            if _mst_better(dist[pick, j], cand, key_w[j], key_pair[j]):
                key_w[j] = dist[pick, j]
                key_pair[j] = cand

    return sorted(edges)


def tree_distances(skeleton: Skeleton) -> JointTreeDistances:
    """
    Unweighted hop distances on the parent tree.

    Multi-root forests are tolerated: pairs in different components get the
    sentinel ``2 * J`` and the result is flagged ``multi_root``.

    Raises:
        RigError: CYCLIC_PARENTS, PARENT_INDEX_OUT_OF_RANGE
    """
    J = skeleton.joint_count
    parents = skeleton.parents
    if ((parents < 0) | (parents > J)).any():
        raise RigError("PARENT_INDEX_OUT_OF_RANGE", f"parent labels must lie in 0..{J}")
    cyclic = find_cycle_joints(parents)
    if cyclic:
        raise RigError("CYCLIC_PARENTS", f"parent cycle through joints {cyclic}", joints=cyclic)

    graph = nx.Graph()
    graph.add_nodes_from(range(J))
    graph.add_edges_from((int(a), int(b)) for a, b in skeleton.edges())

    sentinel = 2 * J
    D = np.full((J, J), sentinel, dtype=np.int64)
    for src, lengths in nx.all_pairs_shortest_path_length(graph):
        for dst, hops in lengths.items():
            D[src, dst] = hops

    multi_root = nx.number_connected_components(graph) > 1
    if multi_root:
        logger.warning(f"Skeleton with {J} joints is a forest; cross-component distance set to {sentinel}")
    return JointTreeDistances(D=D, multi_root=multi_root, sentinel=sentinel)


def bbox_normalize(clip: RigClip) -> RigClip:
    """
    Map the anchor bounding box to the centered unit cube.

    The anchor mesh (or the anchor joints when there is no mesh) defines the
    box; its longest side becomes length 1 and its center the origin. The
    same similarity is applied to every frame and recorded under
    ``metadata["normalization"]`` as ``{"center": [...], "scale": s}`` where
    ``normalized = (raw - center) * scale``.
    """
    if clip.mesh_frames:
        ref = clip.mesh_frames[0].vertices
    else:
        ref = clip.anchor.joints
    _check_finite(ref, "anchor points")
    lo, hi = ref.min(axis=0), ref.max(axis=0)
    center = (lo + hi) / 2.0
    extent = float((hi - lo).max())
    scale = 1.0 / extent if extent > 0 else 1.0

    frames = tuple(s.with_joints((s.joints - center) * scale) for s in clip.skeleton_frames)
    meshes = None
    if clip.mesh_frames is not None:
        meshes = tuple(MeshFrame((m.vertices - center) * scale) for m in clip.mesh_frames)
    metadata: dict[str, Any] = dict(clip.metadata)
    metadata["normalization"] = {"center": [float(c) for c in center], "scale": float(scale)}
    return clip.replace(skeleton_frames=frames, mesh_frames=meshes, metadata=metadata)


def clip_seed_sequence(seed: int, clip_id: str) -> np.random.SeedSequence:
    """Seed sequence for the per-clip stream keyed by (global seed, clip_id)."""
    digest = hashlib.blake2b(clip_id.encode("utf-8"), digest_size=8).digest()
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "little")])


def clip_rng(seed: int, clip_id: str) -> np.random.Generator:
    """Independent generator for one clip; identical for any thread schedule."""
    return np.random.default_rng(clip_seed_sequence(seed, clip_id))
