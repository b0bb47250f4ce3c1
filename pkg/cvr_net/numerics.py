"""
Dense linear-algebra primitives and the seeded random source.

Matrices and vectors are plain float64 ``numpy`` arrays; the helpers here
validate shapes and raise :class:`ShapeError` instead of relying on numpy
broadcasting, which would silently accept mismatched operands.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError

Matrix = np.ndarray
Vector = np.ndarray

MAX_SEED = 2 ** 64


def as_vector(values, length: Optional[int] = None, name: str = "vector") -> Vector:
    """Return ``values`` as a 1-D float64 array, optionally checking its length."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional", actual=arr.shape)
    if length is not None and arr.shape[0] != length:
        raise ShapeError(f"{name} has wrong length", expected=(length,), actual=arr.shape)
    return arr


def as_matrix(values, shape: Optional[Tuple[int, int]] = None, name: str = "matrix") -> Matrix:
    """Return ``values`` as a 2-D float64 array, optionally checking its shape."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be two-dimensional", actual=arr.shape)
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(f"{name} has wrong shape", expected=shape, actual=arr.shape)
    return arr


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.float64)


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def matvec(m: Matrix, x: Vector) -> Vector:
    """Matrix-vector product ``y[i] = sum_j m[i, j] * x[j]``."""
    m = as_matrix(m, name="m")
    x = as_vector(x, name="x")
    if m.shape[1] != x.shape[0]:
        raise ShapeError("matvec operand mismatch", expected=(m.shape[1],), actual=x.shape)
    return m @ x


def dot(a: Vector, b: Vector) -> float:
    a = as_vector(a, name="a")
    b = as_vector(b, name="b")
    if a.shape != b.shape:
        raise ShapeError("dot operand mismatch", expected=a.shape, actual=b.shape)
    return float(a @ b)


def relu(x):
    """``max(0, x)`` for scalars or arrays."""
    if np.ndim(x) == 0:
        return max(0.0, float(x))
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


class Rng:
    """
    Deterministic random source over the counter-based Philox generator.

    The stream is fully determined by ``seed`` and the ``stream`` key path, so
    identical seeds and call sequences give bit-identical draws.
    """

    def __init__(self, seed: int, stream: Sequence[int] = ()):
        seed = int(seed)
        if not 0 <= seed < MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream = tuple(int(k) for k in stream)
        sequence = np.random.SeedSequence([seed, *self.stream])
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def derive(self, *keys: int) -> "Rng":
        """Independent child stream, e.g. one per generated case."""
        return Rng(self.seed, self.stream + tuple(keys))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._generator.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._generator.normal(loc, scale, size)

    def integers(self, low: int, high: int) -> int:
        """Integer in the closed range ``[low, high]``."""
        return int(self._generator.integers(low, high, endpoint=True))

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"


def random_matrix(rng: Rng, rows: int, cols: int, scale: float) -> Matrix:
    """Entries i.i.d. uniform in ``[-scale, +scale]``."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return rng.uniform(-scale, scale, size=(rows, cols))


def random_vector(rng: Rng, length: int, scale: float) -> Vector:
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return rng.uniform(-scale, scale, size=length)


def fan_in_scale(fan_in: int) -> float:
    """Half-width ``1/sqrt(fan_in)`` of the uniform initialisation range."""
    return 1.0 / np.sqrt(fan_in)
