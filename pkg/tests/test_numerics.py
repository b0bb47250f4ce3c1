"""
Tests for the linear-algebra primitives and the seeded random source.
"""

import numpy as np
import pytest

from cvr_net.errors import ShapeError
from cvr_net.numerics import Rng, dot, fan_in_scale, identity, matvec, random_matrix, random_vector, relu, zeros

from asserts import NumericAssertions


class TestLinearAlgebra:
    """matvec, dot and relu on hand-checked inputs."""

    def test_matvec_identity(self):
        assert np.array_equal(matvec(identity(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_matvec_zero(self):
        assert np.array_equal(matvec(zeros(2, 3), [1.0, 2.0, 3.0]), [0.0, 0.0])

    def test_matvec_hand_evaluation(self):
        assert np.array_equal(matvec([[1.0, 2.0], [3.0, 4.0]], [1.0, 1.0]), [3.0, 7.0])

    def test_matvec_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matvec(zeros(2, 3), [1.0, 2.0])

    def test_matvec_linearity(self, rng):
        m = rng.normal(size=(5, 4))
        x, y = rng.normal(size=4), rng.normal(size=4)
        a, b = 1.7, -0.3
        lhs = matvec(m, a * x + b * y)
        rhs = a * matvec(m, x) + b * matvec(m, y)
        NumericAssertions.assert_close(lhs, rhs, atol=1e-12 * max(1.0, float(np.abs(rhs).max())))

    def test_dot(self):
        assert dot([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert dot([1.0, 2.0], [1.0, 2.0]) == 5.0

    def test_dot_self_non_negative(self, rng):
        for _ in range(20):
            x = rng.normal(size=6)
            assert dot(x, x) >= 0.0

    def test_dot_mismatch(self):
        with pytest.raises(ShapeError):
            dot([1.0, 2.0], [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("x,expected", [(-0.5, 0.0), (0.0, 0.0), (1.25, 1.25)])
    def test_relu(self, x, expected):
        assert relu(x) == expected

    def test_relu_array(self):
        assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


class TestRng:
    """Determinism and distribution of the Philox-backed source."""

    def test_same_seed_same_draws(self):
        a = random_matrix(Rng(42), 3, 4, 0.5)
        b = random_matrix(Rng(42), 3, 4, 0.5)
        assert np.array_equal(a, b)

    def test_different_streams_differ(self):
        root = Rng(42)
        assert not np.array_equal(root.derive(0).normal(size=8), root.derive(1).normal(size=8))

    def test_derive_is_stateless(self):
        root = Rng(5)
        first = root.derive(3, 1).uniform(size=4)
        root.normal(size=100)
        assert np.array_equal(first, root.derive(3, 1).uniform(size=4))

    def test_entries_in_range(self, rng):
        m = random_matrix(rng, 50, 50, 0.25)
        assert m.min() >= -0.25 and m.max() <= 0.25

    def test_uniform_sample_mean(self, rng):
        scale = 1.0
        data = random_vector(rng, 10_000, scale)
        sigma = scale / np.sqrt(3.0)
        assert abs(data.mean()) <= 3.0 * sigma / np.sqrt(data.size)

    @pytest.mark.parametrize("scale", [0.0, -1.0])
    def test_non_positive_scale_rejected(self, rng, scale):
        with pytest.raises(ValueError):
            random_matrix(rng, 2, 2, scale)

    def test_tiny_scale_near_zero(self, rng):
        assert np.abs(random_matrix(rng, 4, 4, 1e-300)).max() <= 1e-300

    def test_integers_inclusive(self, rng):
        draws = {rng.integers(1, 2) for _ in range(200)}
        assert draws == {1, 2}

    def test_seed_range(self):
        with pytest.raises(ValueError):
            Rng(-1)
        with pytest.raises(ValueError):
            Rng(2 ** 64)

    def test_fan_in_scale(self):
        assert fan_in_scale(64) == 0.125
