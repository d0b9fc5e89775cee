"""
Tests for the synthetic clip generator and perturbation.
"""
from __future__ import annotations

import numpy as np
import pytest

from rigstable.errors import ConfigError
from rigstable.rigcore import validate_clip
from rigstable.rigmetrics import blrd, gsd, jad, pjdd
from rigstable.rig_types import Skeleton
from rigstable.storage.clip_json import dumps_clip
from rigstable.synthgen import (
    SynthConfig,
    clip_from_static_mesh,
    generate_clip,
    perturb_clip,
    rotation_about,
    topology_parents,
)


class TestSynthConfig:
    """Configuration validation."""

    @pytest.mark.parametrize("changes", [
        {"joint_count": 1},
        {"topology": "ring"},
        {"amplitude": np.pi},
        {"amplitude": -0.1},
        {"frame_count": 0},
        {"tube_radius": 0.0},
        {"bone_length": -1.0},
        {"tube_segments": 2},
        {"rings_per_bone": 1},
        {"zigzag": -0.5},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigError) as exc:
            SynthConfig(**changes)
        assert exc.value.code == "INVALID_CONFIG"

    def test_config_error_is_value_error(self):
        with pytest.raises(ValueError):
            SynthConfig(joint_count=0)

    def test_default_clip_id(self):
        assert SynthConfig().resolved_clip_id == "synth-two_branch-j6-s42"
        assert SynthConfig(clip_id="walk").resolved_clip_id == "walk"


class TestTopology:
    """Parent layouts."""

    def test_chain(self):
        assert topology_parents(4, "chain").tolist() == [0, 1, 2, 3]

    def test_star(self):
        assert topology_parents(4, "star").tolist() == [0, 1, 1, 1]

    def test_two_branch(self):
        assert topology_parents(6, "two_branch").tolist() == [0, 1, 2, 1, 4, 5]

    def test_unknown(self):
        with pytest.raises(ConfigError):
            topology_parents(4, "ring")

    def test_rotation_identity_at_zero(self):
        assert np.array_equal(rotation_about([0.3, -1.0, 2.0], 0.0), np.eye(3))

    def test_rotation_is_orthonormal(self):
        R = rotation_about([1.0, 2.0, 3.0], 0.7)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)


class TestGenerateClip:
    """Generated clips."""

    def test_default_clip_is_valid(self, synth_clip):
        report = validate_clip(synth_clip)
        assert len(report) == 0
        assert synth_clip.frame_count == 3
        assert synth_clip.anchor.joint_count == 6
        assert synth_clip.valid_mask.all()
        assert "generator" in synth_clip.metadata
        assert "normalization" in synth_clip.metadata

    def test_anchor_in_unit_cube(self, synth_clip):
        v = synth_clip.mesh_frames[0].vertices
        extent = v.max(axis=0) - v.min(axis=0)
        assert extent.max() == pytest.approx(1.0)
        np.testing.assert_allclose((v.max(axis=0) + v.min(axis=0)) / 2, 0.0, atol=1e-12)

    def test_weights_row_stochastic_and_constant(self, synth_clip):
        W0 = synth_clip.skin_weights[0]
        np.testing.assert_allclose(W0.sum(axis=1), 1.0, atol=1e-12)
        assert (W0 >= 0).all()
        assert ((W0 > 0).sum(axis=1) <= 2).all()
        for W in synth_clip.skin_weights[1:]:
            assert np.array_equal(W, W0)

    @pytest.mark.parametrize("topology", ["chain", "two_branch", "star"])
    def test_topologies_validate(self, topology):
        clip = generate_clip(SynthConfig(topology=topology, joint_count=5, frame_count=2))
        assert validate_clip(clip).ok

    def test_deterministic(self):
        cfg = SynthConfig(seed=7)
        assert dumps_clip(generate_clip(cfg)) == dumps_clip(generate_clip(cfg))

    def test_seed_changes_clip(self):
        a = generate_clip(SynthConfig(seed=1))
        b = generate_clip(SynthConfig(seed=2))
        assert not np.array_equal(a.anchor.joints, b.anchor.joints)

    def test_zero_amplitude_frames_identical(self, static_clip):
        for skel, mesh in zip(static_clip.skeleton_frames, static_clip.mesh_frames):
            assert np.array_equal(skel.joints, static_clip.anchor.joints)
            assert np.array_equal(mesh.vertices, static_clip.mesh_frames[0].vertices)

    def test_zero_amplitude_metrics_vanish(self, static_clip):
        assert pjdd(static_clip) == 0.0
        assert blrd(static_clip) == 0.0
        assert gsd(static_clip) == pytest.approx(0.0, abs=1e-12)
        assert jad(static_clip) == pytest.approx(0.0, abs=1e-9)

    def test_single_frame(self):
        clip = generate_clip(SynthConfig(frame_count=1))
        assert clip.frame_count == 1
        assert len(clip.mesh_frames) == 1

    def test_motion_moves_joints(self, synth_clip):
        assert not np.allclose(synth_clip.skeleton_frames[1].joints, synth_clip.anchor.joints)


class TestPerturbClip:
    """Gaussian perturbation of non-anchor frames."""

    def test_zero_sigma_is_identity(self, synth_clip):
        assert perturb_clip(synth_clip, 0.0, seed=3) is synth_clip

    def test_anchor_untouched(self, synth_clip, noisy_clip):
        assert noisy_clip.skeleton_frames[0] is synth_clip.skeleton_frames[0]
        assert noisy_clip.mesh_frames[0] is synth_clip.mesh_frames[0]
        assert not np.array_equal(noisy_clip.skeleton_frames[1].joints, synth_clip.skeleton_frames[1].joints)

    def test_metadata_records_noise(self, noisy_clip):
        assert noisy_clip.metadata["perturbation"] == {"sigma": 0.02, "seed": 42}

    def test_deterministic(self, synth_clip):
        a = perturb_clip(synth_clip, 0.05, seed=9)
        b = perturb_clip(synth_clip, 0.05, seed=9)
        assert dumps_clip(a) == dumps_clip(b)

    @pytest.mark.parametrize("sigma", [-0.1, float("nan"), float("inf")])
    def test_bad_sigma(self, synth_clip, sigma):
        with pytest.raises(ValueError):
            perturb_clip(synth_clip, sigma, seed=0)

    def test_empirical_sigma(self):
        clip = generate_clip(SynthConfig(frame_count=12, tube_segments=16, rings_per_bone=40))
        noisy = perturb_clip(clip, 0.1, seed=5)
        residuals = [
            (noisy.mesh_frames[k].vertices - clip.mesh_frames[k].vertices).ravel()
            for k in range(1, clip.frame_count)
        ]
        residuals += [
            (noisy.skeleton_frames[k].joints - clip.skeleton_frames[k].joints).ravel()
            for k in range(1, clip.frame_count)
        ]
        r = np.concatenate(residuals)
        assert r.size >= 100_000
        assert np.std(r) == pytest.approx(0.1, rel=0.05)
        assert abs(np.mean(r)) < 0.005


class TestStaticMesh:
    """Single-frame clips from a static mesh."""

    def test_default_root_at_center(self):
        V = np.array([[0.0, 0, 0], [2.0, 0, 0], [0, 4.0, 0], [0, 0, 6.0]])
        F = np.array([[0, 1, 2], [0, 2, 3]])
        clip = clip_from_static_mesh(V, F)
        assert clip.frame_count == 1
        np.testing.assert_allclose(clip.anchor.joints, [[1.0, 2.0, 3.0]])
        assert clip.anchor.parents.tolist() == [0]

    def test_given_skeleton(self, chain_skeleton):
        V = np.eye(3)
        clip = clip_from_static_mesh(V, np.array([[0, 1, 2]]), chain_skeleton, clip_id="tri")
        assert clip.clip_id == "tri"
        assert clip.anchor is chain_skeleton
