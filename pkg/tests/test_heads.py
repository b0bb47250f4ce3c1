"""
Tests for the classification/regression heads and the two-view loss.
"""

import math

import numpy as np
import pytest

from cvr_net.config import LossWeights
from cvr_net.errors import NumericalError, ShapeError
from cvr_net.heads import (
    BBOX_XFORM_CLIP,
    SMOOTH_L1_KNOT,
    HeadParams,
    classify,
    decode_regression,
    encode_regression_target,
    regress,
    smooth_l1,
    smooth_l1_grad,
    softmax,
    total_loss,
    view_loss,
)
from cvr_net.schema import CandidateTarget, Label, RoiGeometry

from asserts import NumericAssertions


def _zero_heads(d_f: int = 3) -> HeadParams:
    return HeadParams(cls_weight=np.zeros((2, d_f)), cls_bias=np.zeros(2),
                      reg_weight=np.zeros((4, d_f)), reg_bias=np.zeros(4))


def _random_geometry(rng) -> RoiGeometry:
    return RoiGeometry(float(rng.uniform(-100, 100)), float(rng.uniform(-100, 100)),
                       float(rng.uniform(5, 80)), float(rng.uniform(5, 80)))


class TestClassify:
    def test_zero_parameters_are_uniform(self, rng):
        NumericAssertions.assert_close(classify(rng.normal(size=3), _zero_heads()), [0.5, 0.5])

    @pytest.mark.parametrize("z", [-30.0, 0.0, 2.5, 700.0])
    def test_equal_logits(self, z):
        NumericAssertions.assert_close(softmax(np.array([z, z])), [0.5, 0.5])

    def test_hand_evaluated_logits(self):
        p = softmax(np.array([1.0, 0.0]))
        NumericAssertions.assert_close(p, [math.e / (math.e + 1), 1 / (math.e + 1)])
        assert p[0] == pytest.approx(0.7311, abs=1e-4)

    def test_bias_drives_logits(self):
        heads = HeadParams(cls_weight=np.zeros((2, 3)), cls_bias=np.array([1.0, 0.0]),
                           reg_weight=np.zeros((4, 3)), reg_bias=np.zeros(4))
        assert classify(np.ones(3), heads)[0] == pytest.approx(0.7311, abs=1e-4)

    def test_output_is_probability_vector(self, rng):
        for _ in range(200):
            heads = HeadParams(cls_weight=rng.normal(size=(2, 5)), cls_bias=rng.normal(size=2),
                               reg_weight=np.zeros((4, 5)), reg_bias=np.zeros(4))
            p = classify(rng.normal(0, 0.5, size=5), heads)
            assert np.all(p > 0) and np.all(p < 1)
            assert abs(p.sum() - 1.0) <= 1e-12

    def test_saturated_logits_stay_normalized(self):
        p = softmax(np.array([800.0, -800.0]))
        assert np.array_equal(p, [1.0, 0.0])
        assert np.all(np.isfinite(p))

    def test_row_wise_matrix_input(self, rng):
        heads = HeadParams(cls_weight=rng.normal(size=(2, 4)), cls_bias=rng.normal(size=2),
                           reg_weight=rng.normal(size=(4, 4)), reg_bias=rng.normal(size=4))
        x = rng.normal(size=(3, 4))
        probs = classify(x, heads)
        for row, p in zip(x, probs):
            NumericAssertions.assert_close(p, classify(row, heads))

    def test_feature_length_mismatch(self):
        with pytest.raises(ShapeError):
            classify(np.zeros(4), _zero_heads(3))

    def test_head_shapes_validated(self):
        with pytest.raises(ShapeError):
            HeadParams(cls_weight=np.zeros((3, 2)), cls_bias=np.zeros(3),
                       reg_weight=np.zeros((4, 2)), reg_bias=np.zeros(4))


class TestRegression:
    def test_zero_parameters(self, rng):
        assert np.array_equal(regress(rng.normal(size=3), _zero_heads()), np.zeros(4))

    def test_identity_encoding(self):
        box = RoiGeometry(5, 6, 7, 8)
        assert np.array_equal(encode_regression_target(box, box), np.zeros(4))

    def test_hand_evaluated_encoding(self):
        t = encode_regression_target(RoiGeometry(0, 0, 2, 2), RoiGeometry(1, 0, 4, 2))
        NumericAssertions.assert_close(t, [0.5, 0.0, math.log(2.0), 0.0])

    def test_round_trip(self, rng):
        for _ in range(500):
            anchor, gt = _random_geometry(rng), _random_geometry(rng)
            back = decode_regression(anchor, encode_regression_target(anchor, gt))
            NumericAssertions.assert_close(back.as_array(), gt.as_array(), atol=1e-10)

    def test_decode_clips_size_offsets(self):
        box = decode_regression(RoiGeometry(0, 0, 1, 1), [0.0, 0.0, 50.0, 50.0])
        assert box.w == pytest.approx(math.exp(BBOX_XFORM_CLIP))
        assert math.isfinite(box.h)

    def test_decode_clips_large_negative_size_offsets(self):
        box = decode_regression(RoiGeometry(10, 10, 20, 20), [0.0, 0.0, -800.0, -1e6])
        assert box.w == pytest.approx(20 * math.exp(-BBOX_XFORM_CLIP))
        assert box.h == pytest.approx(20 * math.exp(-BBOX_XFORM_CLIP))
        assert box.w > 0 and box.h > 0

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_decode_rejects_non_finite_offsets(self, bad):
        with pytest.raises(NumericalError):
            decode_regression(RoiGeometry(0, 0, 1, 1), [0.0, bad, 0.0, 0.0])


class TestSmoothL1:
    def test_value_continuity_at_knot(self):
        below = float(smooth_l1(SMOOTH_L1_KNOT - 1e-9))
        above = float(smooth_l1(SMOOTH_L1_KNOT + 1e-9))
        assert abs(above - below) < 1e-8
        assert float(smooth_l1(SMOOTH_L1_KNOT)) == pytest.approx(0.5)

    def test_slope_continuity_at_knot(self):
        h = 1e-6
        left = (float(smooth_l1(SMOOTH_L1_KNOT - h)) - float(smooth_l1(SMOOTH_L1_KNOT - 2 * h))) / h
        right = (float(smooth_l1(SMOOTH_L1_KNOT + 2 * h)) - float(smooth_l1(SMOOTH_L1_KNOT + h))) / h
        assert left == pytest.approx(1.0, abs=1e-5)
        assert right == pytest.approx(1.0, abs=1e-5)
        assert float(smooth_l1_grad(SMOOTH_L1_KNOT)) == 1.0

    def test_symmetric(self, rng):
        x = rng.normal(0, 3, size=50)
        assert np.array_equal(smooth_l1(x), smooth_l1(-x))


def _positive(offsets=(0.0, 0.0, 0.0, 0.0)) -> CandidateTarget:
    return CandidateTarget(Label.POSITIVE, np.array(offsets))


class TestViewLoss:
    def test_perfect_predictions(self):
        targets = [_positive((0.1, -0.2, 0.3, 0.0)), CandidateTarget(Label.NEGATIVE)]
        probs = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
        regs = [np.array([0.1, -0.2, 0.3, 0.0]), np.array([5.0, 5.0, 5.0, 5.0])]
        assert view_loss(probs, regs, targets) == (0.0, 0.0)

    def test_uniform_classifier_on_balanced_labels(self):
        targets = [_positive(), CandidateTarget(Label.NEGATIVE), _positive(), CandidateTarget(Label.NEGATIVE)]
        probs = [np.array([0.5, 0.5])] * 4
        cls_loss, _ = view_loss(probs, [np.zeros(4)] * 4, targets)
        assert cls_loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_no_positives_has_zero_regression_loss(self):
        targets = [CandidateTarget(Label.NEGATIVE), CandidateTarget(Label.IGNORE)]
        _, reg_loss = view_loss([np.array([0.3, 0.7])] * 2, [np.ones(4)] * 2, targets)
        assert reg_loss == 0.0

    def test_ignored_candidates_do_not_count(self):
        targets = [CandidateTarget(Label.NEGATIVE), CandidateTarget(Label.IGNORE)]
        probs = [np.array([0.5, 0.5]), np.array([1e-30, 1.0])]
        cls_loss, _ = view_loss(probs, [np.zeros(4)] * 2, targets)
        assert cls_loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_regression_is_mean_over_positives(self):
        targets = [_positive(), _positive(), CandidateTarget(Label.NEGATIVE)]
        regs = [np.array([0.5, 0.0, 0.0, 0.0]), np.array([3.0, 0.0, 0.0, 0.0]), np.full(4, 9.0)]
        _, reg_loss = view_loss([np.array([0.5, 0.5])] * 3, regs, targets)
        assert reg_loss == pytest.approx((0.125 + 2.5) / 2)

    def test_zero_probability_stays_finite(self):
        cls_loss, _ = view_loss([np.array([0.0, 1.0])], [np.zeros(4)], [CandidateTarget(Label.NEGATIVE)])
        assert math.isfinite(cls_loss)

    def test_misaligned_inputs(self):
        with pytest.raises(ShapeError):
            view_loss([np.array([0.5, 0.5])], [], [CandidateTarget(Label.NEGATIVE)])


class TestTotalLoss:
    def test_default_coefficients(self):
        assert total_loss((1.0, 0.5), (2.0, 0.25), LossWeights()) == 4.5

    def test_all_zero(self):
        assert total_loss((0.0, 0.0), (0.0, 0.0), LossWeights()) == 0.0

    def test_zero_weights_leave_first_view_classification(self):
        wts = LossWeights(alpha=0, beta=0, gamma=0)
        assert total_loss((1.3, 0.5), (2.0, 0.25), wts) == 1.3

    def test_monotone_in_every_component(self, rng):
        wts = LossWeights()
        for _ in range(200):
            comps = rng.uniform(0, 5, size=4)
            base = total_loss((comps[0], comps[1]), (comps[2], comps[3]), wts)
            assert base >= 0
            for i in range(4):
                bumped = comps.copy()
                bumped[i] += 0.1
                assert total_loss((bumped[0], bumped[1]), (bumped[2], bumped[3]), wts) >= base
