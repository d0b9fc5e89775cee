"""
Tests for the toy skinning predictor and its fine-tuning loop.
"""
from __future__ import annotations

import numpy as np
import pytest

from rigstable.errors import RigError
from rigstable.skinloss import SkinLossWeights
from rigstable.toytrain import (
    ABLATION_VARIANTS,
    QUERY_DIM,
    TrainOptions,
    ablation_sweep,
    finetune,
    init_toy_model,
    predict,
    prepare_skin_problem,
)


@pytest.fixture(scope="module")
def problem(noisy_clip):
    return prepare_skin_problem(noisy_clip, n_samples=256, seed=3)


class TestPredict:
    """Masked softmax over random Fourier features."""

    def test_zero_head_is_uniform(self, rng):
        model = init_toy_model(4, valid=np.array([True, False, True, True]), n_features=16)
        model = model.with_weights(np.zeros((4, 16)))
        W = predict(model, rng.normal(size=(10, QUERY_DIM)))
        np.testing.assert_allclose(W[:, [0, 2, 3]], 1.0 / 3.0, atol=1e-15)
        assert (W[:, 1] == 0.0).all()

    def test_single_valid_joint(self, rng):
        model = init_toy_model(3, valid=np.array([False, True, False]), init_scale=1.0)
        W = predict(model, rng.normal(size=(7, QUERY_DIM)))
        np.testing.assert_array_equal(W[:, 1], 1.0)
        np.testing.assert_array_equal(W[:, [0, 2]], 0.0)

    def test_rows_stochastic(self, rng):
        model = init_toy_model(5, init_scale=2.0, seed=11)
        W = predict(model, rng.normal(size=(50, QUERY_DIM)))
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
        assert (W >= 0).all()

    def test_permutation_equivariant(self, rng):
        valid = np.array([True, True, False, True, True])
        model = init_toy_model(5, valid=valid, init_scale=1.0, seed=2)
        perm = rng.permutation(5)
        permuted = model.with_weights(model.weights[perm])
        permuted = type(model)(permuted.weights, model.frequencies, model.phases, valid[perm])
        U = rng.normal(size=(20, QUERY_DIM))
        np.testing.assert_allclose(predict(permuted, U), predict(model, U)[:, perm], atol=1e-12)

    def test_bad_query_shape(self):
        model = init_toy_model(3)
        with pytest.raises(RigError) as exc:
            predict(model, np.zeros((4, 3)))
        assert exc.value.code == "SHAPE_MISMATCH"

    def test_bad_valid_mask(self):
        model = init_toy_model(3)
        with pytest.raises(RigError):
            type(model)(model.weights, model.frequencies, model.phases, [True, False])

    def test_seeded(self):
        a, b = init_toy_model(4, seed=5), init_toy_model(4, seed=5)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.frequencies, b.frequencies)


class TestTrainOptions:
    @pytest.mark.parametrize("changes", [{"lr": -1.0}, {"lr": float("nan")}, {"steps": -1}, {"n_features": 0}])
    def test_invalid(self, changes):
        with pytest.raises(ValueError):
            TrainOptions(**changes)


class TestPrepareProblem:
    """Teacher transfer onto surface samples."""

    def test_teacher_matches_samples(self, problem, noisy_clip):
        assert problem.teacher.weights.shape == (problem.samples.count, noisy_clip.anchor.joint_count)
        assert problem.samples.frame_count == noisy_clip.frame_count

    def test_needs_skin_weights(self, noisy_clip):
        with pytest.raises(RigError) as exc:
            prepare_skin_problem(noisy_clip.replace(skin_weights=None), n_samples=16)
        assert exc.value.code == "NO_SKIN_WEIGHTS"


class TestFinetune:
    """Gradient descent on the skinning objective."""

    def test_zero_lr_leaves_metrics(self, noisy_clip, problem):
        res = finetune(noisy_clip, problem.teacher, SkinLossWeights(), TrainOptions(lr=0.0, steps=3), problem.samples)
        assert len(res.trace) == 4
        assert res.before == res.after
        np.testing.assert_array_equal(res.cons_before, res.cons_after)
        np.testing.assert_array_equal(res.delta, 0.0)

    def test_trace_rows(self, noisy_clip, problem):
        res = finetune(noisy_clip, problem.teacher, SkinLossWeights(), TrainOptions(steps=2), problem.samples)
        rows = res.trace_rows()
        assert [r["step"] for r in rows] == [0, 1, 2]
        assert set(rows[0]) == {"step", "total", "sym", "l1", "anchor", "ent", "prior"}
        assert all(np.isfinite(r["total"]) for r in rows)

    def test_deterministic_trace(self, noisy_clip, problem):
        opts = TrainOptions(steps=5, seed=9)
        a = finetune(noisy_clip, problem.teacher, SkinLossWeights(), opts, problem.samples)
        b = finetune(noisy_clip, problem.teacher, SkinLossWeights(), opts, problem.samples)
        assert a.trace_rows() == b.trace_rows()
        assert np.array_equal(a.model.weights, b.model.weights)

    def test_sample_mismatch(self, noisy_clip, problem):
        other = prepare_skin_problem(noisy_clip, n_samples=32, seed=3)
        with pytest.raises(RigError) as exc:
            finetune(noisy_clip, problem.teacher, SkinLossWeights(), TrainOptions(steps=1), other.samples)
        assert exc.value.code == "SHAPE_MISMATCH"

    @pytest.mark.slow
    def test_demo_improves_consistency(self, noisy_clip):
        full = prepare_skin_problem(noisy_clip)
        res = finetune(noisy_clip, full.teacher, SkinLossWeights(), TrainOptions(), full.samples)
        assert res.trace[-1].total <= res.trace[0].total
        assert res.after.symkl_bca < res.before.symkl_bca
        assert res.after.l1_bca < res.before.l1_bca


class TestAblation:
    def test_unknown_variant(self, noisy_clip, problem):
        with pytest.raises(ValueError):
            ablation_sweep(noisy_clip, problem.teacher, SkinLossWeights(), TrainOptions(steps=1),
                           problem.samples, variants=["no_magic"])

    def test_variants_cover_each_weight(self):
        zeroed = [v for v in ABLATION_VARIANTS.values() if v is not None]
        assert sorted(zeroed) == sorted(["lambda_sym", "lambda_1", "lambda_anchor", "lambda_ent", "lambda_prior"])

    @pytest.fixture(scope="class")
    def sweep(self, noisy_clip, problem):
        return ablation_sweep(
            noisy_clip, problem.teacher, SkinLossWeights(), TrainOptions(), problem.samples, seeds=(0, 1, 2),
        )

    @pytest.mark.slow
    def test_sweep_layout(self, sweep):
        assert list(sweep) == list(ABLATION_VARIANTS)
        assert all(len(values) == 3 for values in sweep.values())

    @pytest.mark.slow
    @pytest.mark.parametrize("seed_index", [0, 1, 2])
    @pytest.mark.parametrize("variant", [v for v in ABLATION_VARIANTS if v != "full"])
    def test_dropping_any_term_hurts(self, sweep, variant, seed_index):
        assert sweep[variant][seed_index] >= sweep["full"][seed_index]
