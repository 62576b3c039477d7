"""Deterministic random number generation owned by this package.

Every stochastic draw in the pipeline flows through :class:`Rng`, an
xoshiro256** generator seeded through splitmix64. The generator is
implemented here (and mirrored bit-for-bit by the optional compiled
kernel) rather than delegated to the platform default, so a seed
reproduces the same stream on any machine running this code.

Stream layout conventions:

* ``uniform`` maps the top 53 bits of one 64-bit output to [0, 1).
* ``normal`` uses the Marsaglia polar method (sqrt/log only, both
  correctly rounded on mainstream libms), consuming uniforms in pairs.
* ``spawn(key)`` derives an independent child stream; children with
  distinct keys never share state with each other or the parent.
"""

from __future__ import annotations

import math

import numpy as np

from pam import kernels

_MASK64 = (1 << 64) - 1
_SPAWN_SALT = 0xA0761D6478BD642F


def _mix64(z: int) -> int:
    """splitmix64 finalizer: one well-mixed 64-bit output per input."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** stream with a fixed 64-bit seed.

    The four state words are derived from the seed by iterated
    splitmix64, matching the reference seeding procedure.
    """

    __slots__ = ("seed", "_s", "n_draws")

    def __init__(self, seed: int):
        seed = int(seed) & _MASK64
        self.seed = seed
        # state[i] = i-th output of splitmix64 seeded with `seed`
        s = []
        x = seed
        for _ in range(4):
            x = (x + 0x9E3779B97F4A7C15) & _MASK64
            z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
            s.append(z ^ (z >> 31))
        self._s = s
        self.n_draws = 0

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        self.n_draws += 1
        return result

    def uniform(self) -> float:
        """One double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        if kernels.COMPILED and n >= 32:
            state, consumed = kernels.fill_uniform(self._state_array(), out)
            self._s[:] = [int(v) for v in state]
            self.n_draws += consumed
        else:
            for i in range(n):
                out[i] = self.uniform()
        return out

    def normal(self) -> float:
        return self.normals(1)[0]

    def normals(self, shape) -> np.ndarray:
        """Standard normals via the polar method, filled in stream order."""
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        if kernels.COMPILED and n >= 16:
            state, consumed = kernels.fill_normal(self._state_array(), out)
            self._s[:] = [int(v) for v in state]
            self.n_draws += consumed
        else:
            i = 0
            while i < n:
                u = 2.0 * self.uniform() - 1.0
                v = 2.0 * self.uniform() - 1.0
                s = u * u + v * v
                if s >= 1.0 or s == 0.0:
                    continue
                m = math.sqrt(-2.0 * math.log(s) / s)
                out[i] = u * m
                i += 1
                if i < n:
                    out[i] = v * m
                    i += 1
        return out.reshape(shape)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive (modulo method; the bias
        at 64-bit range is far below anything observable here)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        return lo + self.next_u64() % span

    def randints(self, n: int, lo: int, hi: int) -> np.ndarray:
        """Bulk uniform integers in [lo, hi] (floor-of-uniform method)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        draws = (self.uniforms(n) * span).astype(np.int64)
        return lo + np.minimum(draws, span - 1)

    def choice_weighted(self, n: int, weights: np.ndarray, size: int) -> np.ndarray:
        """`size` indices in [0, n) drawn with probability proportional to weights."""
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        cdf = np.cumsum(w / w.sum())
        cdf[-1] = 1.0
        u = self.uniforms(size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    def shuffle(self, items: list) -> None:
        """Fisher-Yates in place."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def spawn(self, key: int) -> "Rng":
        """Independent child stream keyed by a small integer."""
        return Rng(_mix64(self.seed ^ _mix64((_SPAWN_SALT + int(key)) & _MASK64)))

    def _state_array(self) -> np.ndarray:
        return np.array(self._s, dtype=np.uint64)
