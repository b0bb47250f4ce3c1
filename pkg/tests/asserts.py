# Shared numeric assertions for the test suite, collected in one class

import numpy as np


class NumericAssertions:
    @staticmethod
    def assert_close(actual, expected, atol: float = 1e-12, what: str = "value"):
        """
        Elementwise absolute comparison with a readable failure message.
        """
        actual = np.asarray(actual, dtype=np.float64)
        expected = np.asarray(expected, dtype=np.float64)
        assert actual.shape == expected.shape, f"{what}: shape {actual.shape} != {expected.shape}"
        diff = float(np.max(np.abs(actual - expected))) if actual.size else 0.0
        assert diff <= atol, f"{what}: max abs difference {diff:.3e} exceeds {atol:.1e}"

    @staticmethod
    def assert_finite(values, what: str = "value"):
        assert np.all(np.isfinite(values)), f"{what} contains non-finite entries"

    @staticmethod
    def assert_simplex(weights, atol: float = 1e-12, what: str = "weights"):
        """
        Entries in [0, 1] that sum to one.
        """
        weights = np.asarray(weights, dtype=np.float64)
        assert np.all(weights >= 0.0) and np.all(weights <= 1.0 + atol), f"{what} leave [0, 1]: {weights}"
        assert abs(weights.sum() - 1.0) <= atol, f"{what} sum to {weights.sum()!r}"

    @staticmethod
    def assert_same_tensors(a: dict, b: dict, what: str = "tensors"):
        """
        Bit-identical named tensors.
        """
        assert list(a) == list(b), f"{what}: names differ"
        for name in a:
            assert np.array_equal(a[name], b[name]), f"{what}: {name} differs"
