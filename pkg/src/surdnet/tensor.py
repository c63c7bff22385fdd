"""Dense rank-4 arrays and seeded fills.

Tensors are plain numpy arrays of shape (n, c, h, w), row-major, float32 by
default; pass dtype=np.float64 for the gradient-check precision mode.  All
helpers validate shapes and keep the "no NaN/Inf after a public op" contract.
"""

import numpy as np

from .errors import ParameterError, ShapeError, SizeError
from .rng import SeededRng

DEFAULT_DTYPE = np.float32

# refuse shapes whose element count cannot be addressed comfortably
_MAX_ELEMENTS = 1 << 40


class Shape4(tuple):
    """(n, c, h, w) with all extents >= 1."""

    def __new__(cls, n, c, h, w):
        n, c, h, w = int(n), int(c), int(h), int(w)
        if min(n, c, h, w) < 1:
            raise SizeError("all extents must be >= 1, got (%d,%d,%d,%d)" % (n, c, h, w))
        if n * c * h * w > _MAX_ELEMENTS:
            raise SizeError("element count %d exceeds limit" % (n * c * h * w))
        return super().__new__(cls, (n, c, h, w))

    @property
    def n(self):
        return self[0]

    @property
    def c(self):
        return self[1]

    @property
    def h(self):
        return self[2]

    @property
    def w(self):
        return self[3]

    @property
    def size(self):
        return self[0] * self[1] * self[2] * self[3]


def zeros(shape, dtype=DEFAULT_DTYPE):
    shape = Shape4(*shape)
    return np.zeros(shape, dtype=dtype)


def normal_fill(rng: SeededRng, shape, mean=0.0, std=1.0, dtype=DEFAULT_DTYPE):
    """Tensor of i.i.d. N(mean, std**2) samples, deterministic per seed."""
    if std < 0:
        raise ParameterError("std must be >= 0, got %g" % std)
    shape = Shape4(*shape)
    samples = rng.normal(shape.size) * std + mean
    return samples.reshape(shape).astype(dtype)


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError("shape mismatch: %s vs %s" % (a.shape, b.shape))


def add(a, b):
    _check_same_shape(a, b)
    return a + b


def sub(a, b):
    _check_same_shape(a, b)
    return a - b


def scale(a, k):
    return a * a.dtype.type(k)


def tmap(a, f):
    """Elementwise map by a vectorizable callable (e.g. np.tanh)."""
    return f(a)


def assert_finite(a, what="tensor"):
    if not np.all(np.isfinite(a)):
        raise ParameterError("%s contains NaN/Inf" % what)
    return a
