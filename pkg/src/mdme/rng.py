"""Counter-based splittable PRNG.

Outputs are a pure function of (key, stream, counter), so identical seeds
and call sequences give bit-identical values, and child generators from
`split` never overlap the parent stream. Uniform doubles come from a
splitmix64 finalizer over the counter; normals use Box-Muller.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD6E8FEB86659FD93)
_INV53 = 1.0 / float(1 << 53)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


class Rng:
    """Deterministic random stream over a 64-bit key and running counter."""

    def __init__(self, seed: int, stream: int = 0):
        with np.errstate(over="ignore"):
            key = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
            if stream:
                key = _mix64(key ^ (_STREAM_SALT * np.uint64(stream & 0xFFFFFFFFFFFFFFFF)))
        self.seed = int(key)
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            ks = np.uint64(self.seed) + _GOLDEN * (
                np.uint64(self._counter) + np.arange(1, n + 1, dtype=np.uint64)
            )
            out = _mix64(ks)
        self._counter += n
        return out

    def split(self, index: int) -> "Rng":
        """Child generator; distinct `index` values give independent streams."""
        child = Rng(self.seed, stream=index + 1)
        return child

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray | float:
        """Uniform doubles in [low, high)."""
        n = 1 if size is None else int(np.prod(size))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV53
        u = low + (high - low) * u
        if size is None:
            return float(u[0])
        return u.reshape(size)

    def normal(self, size=None, mean: float = 0.0, std: float = 1.0) -> np.ndarray | float:
        """Standard-normal variates via Box-Muller pairs."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u = (self._raw(2 * m) >> np.uint64(11)).astype(np.float64) * _INV53
        u1, u2 = u[:m], u[m:]
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0,1], log is finite
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = mean + std * z
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, upper: int, size=None) -> np.ndarray | int:
        """Uniform integers in [0, upper)."""
        if upper <= 0:
            raise ValueError("upper must be positive")
        u = self.uniform(size=(1 if size is None else size))
        idx = np.minimum((np.asarray(u) * upper).astype(np.int64), upper - 1)
        if size is None:
            return int(idx[0])
        return idx

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        u = self.uniform(size=(n,))
        return np.argsort(u, kind="stable")

    def choice(self, n: int, count: int) -> np.ndarray:
        """`count` distinct indices from range(n), in draw order."""
        if count > n:
            raise ValueError(f"cannot draw {count} distinct values from {n}")
        return self.permutation(n)[:count]
