"""
Tests for skeleton temporal metrics, static metrics and skinning consistency.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from rigstable.errors import RigError
from rigstable.geomalign import kabsch_align
from rigstable.rig_types import Skeleton
from rigstable.rigcore import anchor_mst
from rigstable.rigmetrics import (
    aligned_frames,
    blrd,
    bone_samples,
    chamfer_static,
    gsd,
    jad,
    joint_delta,
    laplacian_spectrum,
    mpjpe_anchor,
    per_joint_variance,
    pjdd,
    skin_consistency,
    skin_static_quality,
    top_improved_joints,
)
from rigstable.skinops import build_masked_teacher
from tests.helpers.rigs import random_skeleton, rigid_clip, skin_rows

TEMPORAL = (pjdd, blrd, gsd, jad)


def _pair_clip(span0: float, span1: float) -> list:
    return [
        Skeleton([[0.0, 0.0, 0.0], [span0, 0.0, 0.0]], [0, 1]),
        Skeleton([[0.0, 0.0, 0.0], [0.0, span1, 0.0]], [0, 1]),
    ]


def _jad_oracle(frames) -> float:
    X0 = frames[0].joints
    edges = anchor_mst(Skeleton(X0, np.zeros(len(X0), dtype=np.int64)))
    per_frame = []
    for f in frames[1:]:
        Xk = kabsch_align(f.joints, X0).apply(f.joints)
        angles = []
        for i, j in edges:
            a = X0[j] - X0[i]
            b = Xk[j] - Xk[i]
            cos = float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
            angles.append(math.acos(min(1.0, max(-1.0, cos))) / math.pi)
        per_frame.append(np.mean(angles))
    return float(np.mean(per_frame))


class TestTemporalMetrics:
    """PJDD, BLRD, GSD and JAD."""

    @pytest.mark.parametrize("metric", TEMPORAL, ids=lambda f: f.__name__)
    def test_static_clip_is_zero(self, metric, static_clip):
        assert metric(static_clip) <= 1e-9

    @pytest.mark.parametrize("metric", TEMPORAL, ids=lambda f: f.__name__)
    @pytest.mark.parametrize("seed", range(3))
    def test_rigid_clip_is_zero(self, metric, seed):
        clip = rigid_clip(np.random.default_rng(seed), 8, frames=4)
        assert metric(clip) <= 1e-9

    def test_two_joint_span_change(self):
        frames = _pair_clip(1.0, 1.1)
        assert pjdd(frames) == pytest.approx(0.1, abs=1e-12)
        assert blrd(frames) == pytest.approx(0.1, abs=1e-12)

    def test_two_joint_gsd_is_zero(self):
        assert gsd(_pair_clip(0.3, 0.9)) == pytest.approx(0.0, abs=1e-12)

    def test_blrd_doubling(self):
        chain = Skeleton([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]], [0, 1, 2, 3])
        doubled = chain.with_joints(2.0 * chain.joints)
        assert blrd([chain, doubled]) == pytest.approx(1.0, abs=1e-12)

    def test_pjdd_permutation_invariant(self, rng):
        anchor = random_skeleton(rng, 7)
        frame = anchor.with_joints(anchor.joints + rng.normal(scale=0.03, size=(7, 3)))
        perm = rng.permutation(7)
        shuffled = Skeleton(frame.joints[perm], np.zeros(7, dtype=np.int64))
        assert pjdd([anchor, shuffled]) == pytest.approx(pjdd([anchor, frame]), abs=1e-12)

    def test_laplacian_spectrum_shape(self, rng):
        X = rng.normal(size=(9, 3))
        edges = np.array(anchor_mst(Skeleton(X, np.zeros(9, dtype=np.int64))))
        lam = laplacian_spectrum(X, edges, scale=1.0, n_eigs=8)
        assert lam.shape == (8,)
        assert abs(lam[0]) <= 1e-8
        assert (np.diff(lam) >= -1e-12).all()

    def test_jad_matches_oracle(self, noisy_clip):
        assert jad(noisy_clip) == pytest.approx(_jad_oracle(noisy_clip.skeleton_frames), abs=1e-9)

    def test_jad_in_unit_interval(self, rng):
        frames = [random_skeleton(rng, 6) for _ in range(4)]
        assert 0.0 <= jad(frames) <= 1.0

    def test_noisy_clip_is_positive(self, noisy_clip):
        for metric in TEMPORAL:
            assert metric(noisy_clip) > 0

    def test_single_frame(self, chain_skeleton):
        with pytest.raises(RigError) as exc:
            pjdd([chain_skeleton])
        assert exc.value.code == "TOO_FEW_FRAMES"

    def test_joint_count_varies(self, chain_skeleton):
        other = Skeleton(chain_skeleton.joints[:3], [0, 1, 2])
        with pytest.raises(RigError) as exc:
            aligned_frames([chain_skeleton, other])
        assert exc.value.code == "COUNT_MISMATCH"

    def test_single_joint(self):
        one = Skeleton([[0.0, 0.0, 0.0]], [0])
        with pytest.raises(RigError) as exc:
            blrd([one, one])
        assert exc.value.code == "SINGLE_JOINT"

    def test_accepts_clip_or_frames(self, synth_clip):
        assert pjdd(synth_clip) == pjdd(list(synth_clip.skeleton_frames))


class TestStaticMetrics:
    """MPJPE at the anchor and Chamfer variants."""

    def test_mpjpe(self, rng, chain_skeleton):
        assert mpjpe_anchor(chain_skeleton, chain_skeleton) == 0.0
        shifted = chain_skeleton.with_joints(chain_skeleton.joints + [0.0, 0.3, 0.4])
        assert mpjpe_anchor(shifted, chain_skeleton) == pytest.approx(0.5)

    def test_mpjpe_loop_oracle(self, rng):
        a, b = random_skeleton(rng, 5), random_skeleton(rng, 5)
        oracle = sum(math.dist(p, q) for p, q in zip(a.joints.tolist(), b.joints.tolist())) / 5
        assert mpjpe_anchor(a, b) == pytest.approx(oracle, abs=1e-12)

    def test_mpjpe_count_mismatch(self, rng):
        with pytest.raises(RigError) as exc:
            mpjpe_anchor(random_skeleton(rng, 3), random_skeleton(rng, 4))
        assert exc.value.code == "COUNT_MISMATCH"

    def test_j2j_single_joints(self):
        p = Skeleton([[0.0, 0.0, 0.0]], [0])
        q = Skeleton([[0.0, 3.0, 4.0]], [0])
        assert chamfer_static(p, q, "J2J") == pytest.approx(5.0)

    @pytest.mark.parametrize("mode", ["J2J", "J2B", "B2B"])
    def test_identical_skeletons(self, mode, chain_skeleton):
        if mode == "J2B":
            # joints are bone endpoints, so only the bone-to-joint direction is nonzero
            assert chamfer_static(chain_skeleton, chain_skeleton, mode) > 0
        else:
            assert chamfer_static(chain_skeleton, chain_skeleton, mode) == 0.0

    @pytest.mark.parametrize("mode", ["J2J", "B2B"])
    def test_symmetric(self, mode, rng):
        a, b = random_skeleton(rng, 5), random_skeleton(rng, 6)
        assert chamfer_static(a, b, mode) == pytest.approx(chamfer_static(b, a, mode), abs=1e-12)

    def test_b2b_matches_oracle(self, rng):
        a, b = random_skeleton(rng, 4), random_skeleton(rng, 5)
        pa, pb = bone_samples(a, 8), bone_samples(b, 8)
        forward = np.mean([min(np.linalg.norm(x - y) for y in pb) for x in pa])
        backward = np.mean([min(np.linalg.norm(x - y) for y in pa) for x in pb])
        assert chamfer_static(a, b, "B2B", samples_per_bone=8) == pytest.approx(0.5 * (forward + backward))

    def test_bone_samples_include_endpoints(self, chain_skeleton):
        pts = bone_samples(chain_skeleton, 16)
        assert pts.shape == (48, 3)
        np.testing.assert_allclose(pts[0], chain_skeleton.joints[0])
        np.testing.assert_allclose(pts[15], chain_skeleton.joints[1])

    def test_bone_mode_needs_edges(self, chain_skeleton):
        lone = Skeleton([[0.0, 0.0, 0.0]], [0])
        with pytest.raises(RigError) as exc:
            chamfer_static(chain_skeleton, lone, "J2B")
        assert exc.value.code == "NO_EDGES"

    def test_unknown_mode(self, chain_skeleton):
        with pytest.raises(ValueError):
            chamfer_static(chain_skeleton, chain_skeleton, "X2Y")


class TestSkinConsistency:
    """Teacher-based consistency metrics and per-joint variance."""

    def test_perfect_predictions(self, rng):
        rows = skin_rows(rng, 6, 4)
        teacher = build_masked_teacher(rows, np.ones(4, bool), k_s=2)
        result = skin_consistency([rows, rows, rows], teacher)
        assert result.l1_bca == pytest.approx(0.0, abs=1e-12)
        assert result.symkl_bca == pytest.approx(0.0, abs=1e-12)

    def test_delta_predictions_have_zero_entropy(self):
        rows = np.eye(3)[[0, 1, 2, 0]]
        teacher = build_masked_teacher(rows, np.ones(3, bool), k_s=1)
        assert skin_consistency([rows, rows], teacher).entropy == pytest.approx(0.0, abs=1e-7)

    def test_two_frame_oracle(self):
        teacher_rows = np.array([[0.7, 0.3], [0.2, 0.8]])
        teacher = build_masked_teacher(teacher_rows, np.ones(2, bool), k_s=2)
        frame1 = np.array([[0.5, 0.5], [0.4, 0.6]])
        result = skin_consistency([teacher_rows, frame1], teacher)
        # full support, row sums 1: renorm only divides by (1 + eps)
        l1 = sum(abs(frame1[i][j] - teacher_rows[i][j]) for i in range(2) for j in range(2)) / 2.0
        assert result.l1_bca == pytest.approx(l1, rel=1e-6)

    def test_needs_two_frames(self, rng):
        rows = skin_rows(rng, 2, 2)
        teacher = build_masked_teacher(rows, np.ones(2, bool))
        with pytest.raises(RigError) as exc:
            skin_consistency([rows], teacher)
        assert exc.value.code == "TOO_FEW_FRAMES"

    def test_constant_predictions(self, rng):
        rows = skin_rows(rng, 5, 3)
        np.testing.assert_array_equal(per_joint_variance([rows, rows, rows]), np.zeros(3))

    def test_zero_weight_joint(self, rng):
        a = np.array([[0.4, 0.6, 0.0]])
        b = np.array([[0.6, 0.4, 0.0]])
        assert per_joint_variance([a, b])[2] == 0.0

    def test_hand_example(self):
        cons = per_joint_variance([np.array([[0.4, 0.6]]), np.array([[0.6, 0.4]])])
        assert cons[0] == pytest.approx(0.01, rel=1e-6)

    def test_frame_subset(self):
        frames = [np.array([[0.5, 0.5]]), np.array([[0.4, 0.6]]), np.array([[0.6, 0.4]])]
        np.testing.assert_allclose(per_joint_variance(frames, frames=[1, 2]), [0.01, 0.01], rtol=1e-6)
        with pytest.raises(RigError):
            per_joint_variance(frames, frames=[0])

    def test_delta_and_ranking(self):
        delta = joint_delta(np.array([0.3, 0.1, 0.5, 0.1]), np.array([0.1, 0.1, 0.2, 0.0]))
        np.testing.assert_allclose(delta, [0.2, 0.0, 0.3, 0.1])
        assert top_improved_joints(delta, k=2) == [2, 0]
        with pytest.raises(RigError):
            joint_delta(np.zeros(2), np.zeros(3))


class TestStaticSkinQuality:
    """Precision, recall and L1 against ground-truth weights."""

    def test_identical(self, rng):
        w = skin_rows(rng, 4, 3)
        q = skin_static_quality(w, w)
        assert q == {"precision": 1.0, "recall": 1.0, "l1": 0.0}

    def test_partial_overlap(self):
        gt = np.array([[0.5, 0.5, 0.0]])
        pred = np.array([[1.0, 0.0, 0.0]])
        q = skin_static_quality(pred, gt)
        assert q["precision"] == 1.0
        assert q["recall"] == 0.5
        assert q["l1"] == pytest.approx(1.0)

    def test_undefined_is_zero(self):
        q = skin_static_quality(np.zeros((2, 2)), np.zeros((2, 2)))
        assert q["precision"] == 0.0 and q["recall"] == 0.0

