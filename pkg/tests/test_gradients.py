"""
Tests for the analytic backward pass and the central-difference verifier.
"""

import numpy as np
import pytest

from cvr_net.config import GradCheckConfig, LossWeights
from cvr_net.errors import DomainError
from cvr_net.gradients import (
    GradCheckReport,
    ParamGradients,
    TARGET_OFFSET_RANGE,
    backward,
    build_gradcheck_problem,
    compute_loss,
    finite_difference_check,
    forward_pass,
    relative_error,
)
from cvr_net.heads import SMOOTH_L1_KNOT
from cvr_net.schema import Label, PairedSample

from asserts import NumericAssertions

SMALL = dict(d_f=4, d_k=2, d_emb=8, n_blocks=1, candidates_per_view=2)


def _zeroed(model, predicate):
    tensors = {name: (np.zeros_like(arr) if predicate(name) else arr)
               for name, arr in model.named_tensors().items()}
    return model.with_tensors(tensors)


class TestBackward:
    def test_gradients_mirror_parameters(self, gradcheck_problem):
        sample, model = gradcheck_problem
        _, grads = backward(sample, model, LossWeights())
        params = model.named_tensors()
        assert list(grads.tensors) == list(params)
        for name, arr in params.items():
            assert grads[name].shape == arr.shape
        assert grads.is_finite()

    def test_loss_matches_forward_evaluation(self, gradcheck_problem):
        sample, model = gradcheck_problem
        loss, _ = backward(sample, model, LossWeights())
        assert loss == compute_loss(sample, model, LossWeights())

    def test_dead_gates_silence_relation_gradients(self, gradcheck_problem):
        sample, model = gradcheck_problem
        model = _zeroed(model, lambda name: name.endswith(".v"))
        _, grads = backward(sample, model, LossWeights())
        for name in grads.tensors:
            if name.startswith("blocks_"):
                assert not grads[name].any(), name
        assert grads["heads.cls_weight"].any()

    def test_unweighted_second_view_heads_get_no_gradient(self):
        sample, model = build_gradcheck_problem(GradCheckConfig(shared_heads=False))
        _, grads = backward(sample, model, LossWeights(alpha=2.0, beta=0.0, gamma=0.0))
        for name in ("cls_weight", "cls_bias", "reg_weight", "reg_bias"):
            assert not grads[f"heads.view2.{name}"].any()
            assert grads[f"heads.view1.{name}"].any()

    @pytest.mark.parametrize("seed", [0, 20])
    def test_shared_head_gradients_have_no_zero_entries(self, seed):
        sample, model = build_gradcheck_problem(GradCheckConfig(seed=seed))
        _, grads = backward(sample, model, LossWeights())
        for name in ("cls_weight", "cls_bias", "reg_weight", "reg_bias"):
            assert np.all(grads[f"heads.{name}"] != 0.0), name

    def test_empty_view_rejected(self, gradcheck_problem):
        sample, model = gradcheck_problem
        empty = PairedSample(case_id=0, view1=sample.view1, view2=[], gt1=sample.gt1, gt2=sample.gt2,
                             targets1=sample.targets1, targets2=[])
        with pytest.raises(DomainError):
            backward(empty, model, LossWeights())

    def test_gradient_sum_and_scale(self, gradcheck_problem):
        sample, model = gradcheck_problem
        _, grads = backward(sample, model, LossWeights())
        doubled = (grads + grads).scaled(0.5)
        NumericAssertions.assert_same_tensors(doubled.tensors, grads.tensors)
        assert ParamGradients.zeros_like(model).max_abs() == 0.0


class TestFiniteDifferenceCheck:
    def test_default_problem_passes(self, gradcheck_problem):
        sample, model = gradcheck_problem
        report = finite_difference_check(sample, model, LossWeights(), step=1e-5, tolerance=1e-4)
        assert report.passed, report.max_relative_error
        assert report.n_entries == sum(arr.size for arr in model.named_tensors().values())

    @pytest.mark.parametrize("seed", range(0, 21))
    def test_random_seeds_pass(self, seed):
        sample, model = build_gradcheck_problem(GradCheckConfig(seed=seed))
        report = finite_difference_check(sample, model, LossWeights())
        assert report.passed, report.max_relative_error

    def test_small_instance_with_six_features(self):
        cfg = GradCheckConfig(seed=101, d_f=6, d_k=4, d_emb=8, n_blocks=1, candidates_per_view=2)
        sample, model = build_gradcheck_problem(cfg)
        assert finite_difference_check(sample, model, LossWeights()).passed

    def test_per_view_heads_pass(self):
        sample, model = build_gradcheck_problem(GradCheckConfig(seed=5, shared_heads=False, **SMALL))
        assert finite_difference_check(sample, model, LossWeights()).passed

    def test_all_zero_relation_parameters_pass(self):
        sample, model = build_gradcheck_problem(GradCheckConfig(shared_heads=False))
        model = _zeroed(model, lambda name: name.startswith("blocks_"))
        report = finite_difference_check(sample, model, LossWeights())
        assert report.passed
        assert report.max_relative_error["blocks_1from2.0.W3"] == 0.0

    def test_corrupted_gradient_fails(self, gradcheck_problem):
        sample, model = gradcheck_problem
        report = finite_difference_check(sample, model, LossWeights(), corrupt=0.1)
        assert not report.passed
        assert report.overall_error > 0.05
        assert report.worst_tensor is not None

    @pytest.mark.parametrize("step", [1e-8, 1e-2])
    def test_step_range(self, gradcheck_problem, step):
        sample, model = gradcheck_problem
        with pytest.raises(ValueError):
            finite_difference_check(sample, model, LossWeights(), step=step)

    def test_check_leaves_model_untouched(self, gradcheck_problem):
        sample, model = gradcheck_problem
        before = {k: v.copy() for k, v in model.named_tensors().items()}
        finite_difference_check(sample, model, LossWeights())
        NumericAssertions.assert_same_tensors(model.named_tensors(), before)


class TestGradCheckProblem:
    @pytest.mark.parametrize("seed", [0, 7, 20])
    def test_positive_residuals_inside_smooth_l1_knot(self, seed):
        sample, model = build_gradcheck_problem(GradCheckConfig(seed=seed))
        low, high = TARGET_OFFSET_RANGE
        for view in forward_pass(sample, model, LossWeights()).views:
            positive = view.labels == Label.POSITIVE.code
            assert positive.sum() == 1
            residual = np.abs(view.regs[positive] - view.reg_targets[positive])
            assert np.all(residual > low - 1e-12) and np.all(residual < high + 1e-12)
            assert high < SMOOTH_L1_KNOT

    def test_same_seed_same_problem(self):
        first, _ = build_gradcheck_problem(GradCheckConfig(seed=3))
        second, _ = build_gradcheck_problem(GradCheckConfig(seed=3))
        for a, b in zip(first.targets1 + first.targets2, second.targets1 + second.targets2):
            assert a.label is b.label
            if a.regression_target is not None:
                assert np.array_equal(a.regression_target, b.regression_target)


class TestGradCheckReport:
    def test_verdict_must_match_errors(self):
        with pytest.raises(ValueError):
            GradCheckReport(max_relative_error={"W1": 0.5}, tolerance=1e-4, passed=True)

    def test_empty_report_passes(self):
        report = GradCheckReport(tolerance=1e-4, passed=True)
        assert report.overall_error == 0.0
        assert report.worst_tensor is None

    def test_relative_error_floor(self):
        assert relative_error(np.array([0.0]), np.array([0.0]))[0] == 0.0
        assert relative_error(np.array([1e-12]), np.array([0.0]))[0] == pytest.approx(1e-4)
        assert relative_error(np.array([2.0]), np.array([1.0]))[0] == 0.5
