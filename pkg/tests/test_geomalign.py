"""
Tests for Kabsch and structure-tensor alignment and the symmetric Chamfer distance.
"""
from __future__ import annotations

import numpy as np
import pytest

from rigstable.errors import RigError
from rigstable.geomalign import (
    RigidTransform,
    candidate_rotations,
    kabsch_align,
    midpoints,
    structure_tensor,
    structure_tensor_align,
    symmetric_chamfer,
)
from rigstable.rig_types import Skeleton
from tests.helpers.rigs import random_rotation, random_skeleton, rigid_copy


def _rz(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]])


def _residual(T: RigidTransform, S: np.ndarray, G: np.ndarray) -> float:
    return float(np.sum((T.apply(S) - G) ** 2))


def _assert_proper_rotation(R: np.ndarray) -> None:
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


def _chamfer_oracle(a: np.ndarray, b: np.ndarray) -> float:
    def directed(p, q):
        total = 0.0
        for x in p:
            total += min(float(np.sum((x - y) ** 2)) for y in q)
        return total / len(p)
    return 0.5 * (directed(a, b) + directed(b, a))


class TestKabsch:
    """Correspondence-based rigid fit."""

    def test_identity(self, rng):
        S = rng.normal(size=(5, 3))
        T = kabsch_align(S, S)
        np.testing.assert_allclose(T.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(T.translation, np.zeros(3), atol=1e-9)

    def test_recovers_known_transform(self, rng):
        S = rng.normal(size=(6, 3))
        G = S @ _rz(90).T + np.array([1.0, 0.0, 0.0])
        T = kabsch_align(S, G)
        np.testing.assert_allclose(T.rotation, _rz(90), atol=1e-9)
        np.testing.assert_allclose(T.translation, [1.0, 0.0, 0.0], atol=1e-9)

    def test_single_point_is_translation(self):
        T = kabsch_align(np.array([[1.0, 2.0, 3.0]]), np.array([[0.0, 0.0, 1.0]]))
        np.testing.assert_allclose(T.rotation, np.eye(3))
        np.testing.assert_allclose(T.translation, [-1.0, -2.0, -2.0])

    def test_beats_random_search(self, rng):
        S = rng.normal(size=(4, 3))
        G = rng.normal(size=(4, 3))
        best = _residual(kabsch_align(S, G), S, G)
        for _ in range(1000):
            T = RigidTransform(random_rotation(rng), rng.normal(size=3))
            assert best <= _residual(T, S, G) + 1e-12

    def test_reflection_is_repaired(self, rng):
        S = rng.normal(size=(6, 3))
        G = S * np.array([1.0, 1.0, -1.0])
        T = kabsch_align(S, G)
        _assert_proper_rotation(T.rotation)

    def test_residual_invariant_to_common_rotation(self, rng):
        S = rng.normal(size=(7, 3))
        G = rng.normal(size=(7, 3))
        Q = random_rotation(rng)
        r0 = _residual(kabsch_align(S, G), S, G)
        r1 = _residual(kabsch_align(S @ Q.T, G @ Q.T), S @ Q.T, G @ Q.T)
        assert r1 == pytest.approx(r0, abs=1e-9)

    def test_count_mismatch(self, rng):
        with pytest.raises(RigError) as exc:
            kabsch_align(rng.normal(size=(3, 3)), rng.normal(size=(4, 3)))
        assert exc.value.code == "COUNT_MISMATCH"

    def test_nonfinite(self):
        S = np.array([[0.0, 0.0, 0.0], [np.nan, 0.0, 0.0]])
        with pytest.raises(RigError) as exc:
            kabsch_align(S, np.zeros((2, 3)))
        assert exc.value.code == "NONFINITE_COORDINATE"


class TestChamfer:
    """Symmetric Chamfer distance."""

    def test_single_pair(self):
        assert symmetric_chamfer(np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]])) == 1.0

    def test_unsquared_variant(self):
        d = symmetric_chamfer(np.zeros((1, 3)), np.array([[2.0, 0.0, 0.0]]), squared=False)
        assert d == pytest.approx(2.0)

    def test_matches_brute_force(self, rng):
        a = rng.normal(size=(9, 3))
        b = rng.normal(size=(5, 3))
        assert symmetric_chamfer(a, b) == pytest.approx(_chamfer_oracle(a, b), rel=1e-12, abs=1e-15)

    def test_empty_set(self):
        with pytest.raises(RigError) as exc:
            symmetric_chamfer(np.zeros((0, 3)), np.zeros((2, 3)))
        assert exc.value.code == "EMPTY_SET"


class TestStructureTensorAlign:
    """Correspondence-free alignment on parent-edge structure tensors."""

    def test_tensor_weights_sum_to_one(self):
        S = structure_tensor(np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        # weights 2/3 and 1/3
        np.testing.assert_allclose(np.diag(S), [8.0 / 3.0, 1.0 / 3.0, 0.0])

    def test_identical_frame(self, rng):
        skel = random_skeleton(rng, 8)
        T = structure_tensor_align(skel, skel)
        np.testing.assert_allclose(T.rotation, np.eye(3), atol=1e-8)
        np.testing.assert_allclose(T.translation, np.zeros(3), atol=1e-8)
        assert not T.degenerate

    @pytest.mark.parametrize("seed", range(20))
    def test_recovers_rigid_motion(self, seed):
        rng = np.random.default_rng(seed)
        anchor = random_skeleton(rng, 10)
        frame = rigid_copy(anchor, random_rotation(rng), rng.normal(scale=0.3, size=3))
        T = structure_tensor_align(anchor, frame)
        _assert_proper_rotation(T.rotation)
        assert symmetric_chamfer(T.apply(midpoints(anchor)), midpoints(frame)) <= 1e-8

    def test_result_is_best_candidate(self, rng):
        anchor = random_skeleton(rng, 7)
        frame = random_skeleton(rng, 9)
        T = structure_tensor_align(anchor, frame)
        m0, mk = midpoints(anchor), midpoints(frame)
        chosen = symmetric_chamfer(T.apply(m0), mk)
        candidates = candidate_rotations(anchor, frame)
        assert len(candidates) == 4
        assert chosen == min(symmetric_chamfer(c.apply(m0), mk) for c in candidates)
        for c in candidates:
            _assert_proper_rotation(c.rotation)

    def test_collinear_chain_falls_back_to_kabsch(self):
        anchor = Skeleton([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.3, 0.0, 0.0]], [0, 1, 2])
        frame = rigid_copy(anchor, np.eye(3), [0.0, 0.5, 0.0])
        T = structure_tensor_align(anchor, frame)
        assert T.method == "kabsch_fallback"
        assert T.degenerate
        _assert_proper_rotation(T.rotation)
        np.testing.assert_allclose(T.apply(anchor.joints), frame.joints, atol=1e-9)

    def test_collinear_with_different_counts_uses_centroids(self):
        anchor = Skeleton([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]], [0, 1])
        frame = Skeleton([[0.0, 1.0, 0.0], [0.1, 1.0, 0.0], [0.2, 1.0, 0.0]], [0, 1, 2])
        T = structure_tensor_align(anchor, frame)
        assert T.method == "centroid_fallback"
        np.testing.assert_allclose(T.rotation, np.eye(3))
        np.testing.assert_allclose(T.translation, [0.0, 1.0, 0.0], atol=1e-12)

    def test_no_edges(self):
        single = Skeleton([[0.0, 0.0, 0.0]], [0])
        with pytest.raises(RigError) as exc:
            structure_tensor_align(single, single)
        assert exc.value.code == "NO_EDGES"
