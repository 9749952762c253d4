"""Deterministic random streams: xoshiro256++ seeded through splitmix64.

The inner loops are compiled with numba so that the millions of Gaussian
draws consumed by SDG layers stay cheap while the stream itself remains
bit-reproducible across platforms.
"""

from __future__ import annotations

import numba
import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *labels: int) -> int:
    """Mix a base seed with integer labels into an independent 64-bit seed."""
    state = seed & _MASK64
    _, out = splitmix64(state)
    for label in labels:
        state, out = splitmix64(out ^ (label & _MASK64))
    return out


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def _next(s):
    result = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.size):
        out[i] = _next(s)


@numba.njit(cache=True)
def _to_open_unit(x):
    # 52 high bits, centred in their cell: strictly inside (0, 1)
    return (np.float64(x >> np.uint64(12)) + 0.5) * 2.220446049250313e-16


@numba.njit(cache=True)
def _fill_uniform(s, out):
    for i in range(out.size):
        out[i] = _to_open_unit(_next(s))


@numba.njit(cache=True)
def _fill_gaussian(s, cache, out):
    i = 0
    n = out.size
    if n > 0 and cache[0] != 0.0:
        out[0] = cache[1]
        cache[0] = 0.0
        i = 1
    while i < n:
        u = 2.0 * _to_open_unit(_next(s)) - 1.0
        v = 2.0 * _to_open_unit(_next(s)) - 1.0
        r = u * u + v * v
        if r >= 1.0 or r == 0.0:
            continue
        f = np.sqrt(-2.0 * np.log(r) / r)
        out[i] = u * f
        i += 1
        if i < n:
            out[i] = v * f
            i += 1
        else:
            cache[0] = 1.0
            cache[1] = v * f


def _shape(shape) -> tuple[int, ...]:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


class Prng:
    """xoshiro256++ generator with a one-value cache for polar Box-Muller.

    Not thread-safe; give each worker its own instance (see :func:`derive_seed`).
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        state = self.seed & _MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._state = np.array(words, dtype=np.uint64)
        # [has_pending, pending_value]
        self._cache = np.zeros(2, dtype=np.float64)

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(int(w) for w in self._state)

    def next_u64(self) -> int:
        out = np.empty(1, dtype=np.uint64)
        _fill_u64(self._state, out)
        return int(out[0])

    def uniform(self, shape) -> np.ndarray:
        """I.i.d. draws from U(0, 1), open at both ends."""
        out = np.empty(_shape(shape), dtype=np.float64)
        _fill_uniform(self._state, out.reshape(-1))
        return out

    def gaussian(self, shape) -> np.ndarray:
        """I.i.d. standard normal draws, filled in row-major order."""
        out = np.empty(_shape(shape), dtype=np.float64)
        _fill_gaussian(self._state, self._cache, out.reshape(-1))
        return out

    def integers(self, high: int, size) -> np.ndarray:
        """Uniform integers in ``[0, high)``."""
        if high <= 0:
            raise ValueError(f"high must be positive, got {high}")
        idx = np.floor(self.uniform(size) * high).astype(np.int64)
        return np.minimum(idx, high - 1)
