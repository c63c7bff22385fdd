"""Deterministic 64-bit counter-based random number generator.

The generator is SplitMix64 used in counter mode: the state is a 64-bit
counter advanced by the golden-ratio increment 0x9E3779B97F4A7C15, and each
output is the SplitMix64 finalizer applied to the new counter value:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

All arithmetic is modulo 2**64.  The same seed therefore yields the same
stream on every platform, and the update rule above is simple enough to
replay in any language.

Uniform doubles take the top 53 bits: u = (out >> 11) * 2**-53, in [0, 1).
Normal samples use Box-Muller; both outputs of each pair are consumed, cosine
first, sine second.  Poisson sampling uses the multiplication (inversion)
method below mean 30 and a continuity-corrected normal approximation above
(relative error of the first two moments is at most 1/(12*30) < 0.3%).
"""

import math

import numpy as np

from .errors import ParameterError

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

# mean at or above which poisson() switches to the normal approximation
POISSON_NORMAL_CUTOFF = 30.0


def _mix64(z):
    """SplitMix64 finalizer on a Python int (mod 2**64)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SeededRng:
    """Counter-based SplitMix64 stream.  Single-owner; not thread-safe."""

    def __init__(self, seed):
        self._state = int(seed) & _MASK

    @property
    def state(self):
        """Current 64-bit counter; pass to the constructor to resume."""
        return self._state

    def split(self, index):
        """Derive an independent sub-stream for deterministic parallel work."""
        return SeededRng(_mix64(self._state ^ _mix64((int(index) + 1) * _GAMMA)))

    def _next_block(self, n):
        """n raw 64-bit outputs as a uint64 array, advancing the counter by n."""
        counters = (
            np.uint64(self._state)
            + (np.arange(1, n + 1, dtype=np.uint64)) * np.uint64(_GAMMA)
        )
        self._state = (self._state + n * _GAMMA) & _MASK
        z = counters
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def child_seed(self):
        """One raw 64-bit output, for seeding a derived stream."""
        return int(self._next_block(1)[0])

    def uniform(self, n=None):
        """Uniform draws in [0, 1).  Scalar if n is None, else float64 array."""
        if n is None:
            return float(self.uniform(1)[0])
        bits = self._next_block(int(n))
        return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def normal(self, n=None):
        """Standard normal draws via Box-Muller, both pair outputs consumed."""
        if n is None:
            return float(self.normal(1)[0])
        n = int(n)
        pairs = (n + 1) // 2
        u1 = 1.0 - self.uniform(pairs)  # in (0, 1], keeps log finite
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def poisson(self, mean):
        """One Poisson draw with the given mean (scalar, non-negative)."""
        mean = float(mean)
        if mean < 0:
            raise ParameterError("Poisson mean must be >= 0, got %g" % mean)
        return float(self.poisson_array(np.array([mean]))[0])

    def poisson_array(self, means):
        """Elementwise Poisson draws for an array of means.

        Small means (< 30) use the exact multiplication method: count uniform
        factors until the running product drops below exp(-mean).  Large means
        use round(mean + sqrt(mean) * z) clamped at zero; normals for the
        large entries are drawn first, in flattened index order.
        """
        means = np.asarray(means, dtype=np.float64)
        if np.any(means < 0):
            raise ParameterError("Poisson means must be >= 0")
        flat = means.ravel()
        out = np.zeros(flat.shape)

        large = flat >= POISSON_NORMAL_CUTOFF
        n_large = int(np.count_nonzero(large))
        if n_large:
            z = self.normal(n_large)
            m = flat[large]
            out[large] = np.maximum(0.0, np.floor(m + np.sqrt(m) * z + 0.5))

        small = ~large
        if np.any(small):
            limit = np.exp(-flat[small])
            prod = np.ones(limit.shape)
            count = np.zeros(limit.shape)
            active = prod > limit
            while np.any(active):
                idx = np.nonzero(active)[0]
                prod[idx] *= self.uniform(idx.size)
                still = prod[idx] > limit[idx]
                count[idx[still]] += 1.0
                active[idx[~still]] = False
            out[small] = count

        return out.reshape(means.shape)
