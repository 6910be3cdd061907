"""Deterministic, splittable random streams.

Every stream is Philox4x64-10 keyed by the first 16 bytes of
``sha256(f"{seed}/{path}")``, counter starting at zero. Variates are built
from the raw 64-bit words only, so the streams do not depend on numpy's
distribution code:

* uniform: ``(word >> 11) * 2**-53``
* normal: Box-Muller on two uniforms, ``u1`` mapped to ``1 - u1``
* integers below ``n``: ``floor(uniform * n)``
* permutation: Fisher-Yates driven by ``integers``
"""

from __future__ import annotations

import hashlib

import numpy as np

_TWO_NEG53 = 2.0**-53


def derive_key(seed: int, path: str) -> tuple[int, int]:
    digest = hashlib.sha256(f"{int(seed)}/{path}".encode()).digest()
    return int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:16], "little")


class RngStream:
    """A named random stream; ``split`` derives independent children."""

    def __init__(self, seed: int, path: str = "root"):
        self.seed = int(seed)
        self.path = path
        k0, k1 = derive_key(self.seed, path)
        self._bitgen = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64))
        self.position = 0

    def split(self, name: str | int) -> "RngStream":
        return RngStream(self.seed, f"{self.path}/{name}")

    def raw(self, n: int) -> np.ndarray:
        n = int(n)
        self.position += n
        if n == 0:
            return np.zeros(0, dtype=np.uint64)
        return self._bitgen.random_raw(n).astype(np.uint64)

    def restore(self, position: int) -> None:
        """Rewind or fast-forward to ``position`` words from the start."""
        k0, k1 = derive_key(self.seed, self.path)
        self._bitgen = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64))
        self.position = 0
        blocks, rem = divmod(int(position), 4)
        if blocks:
            self._bitgen.advance(blocks)
            self.position = 4 * blocks
        self.raw(rem)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        u = low + (high - low) * u
        if size is None:
            return float(u[0])
        return u.reshape(shape)

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0):
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1).reshape(-1)[:n]
        z = loc + scale * z
        if size is None:
            return float(z[0])
        return z.reshape(shape)

    def integers(self, high: int, size=None):
        if high <= 0:
            raise ValueError(f"high must be positive, got {high}")
        u = self.uniform(size)
        if size is None:
            return int(u * high)
        return np.floor(u * high).astype(np.int64)

    def exponential(self, size=None, scale: float = 1.0):
        u = self.uniform(size)
        return -scale * np.log1p(-u)

    def bernoulli(self, p: float, size) -> np.ndarray:
        return self.uniform(size) < p

    def permutation(self, n: int) -> np.ndarray:
        out = np.arange(n)
        if n < 2:
            return out
        # Fisher-Yates from the top
        draws = self.uniform(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(draws[n - 1 - i] * (i + 1))
            out[i], out[j] = out[j], out[i]
        return out

    def choice(self, n: int, size, p=None) -> np.ndarray:
        if p is None:
            return self.integers(n, size)
        cdf = np.cumsum(np.asarray(p, dtype=np.float64))
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, self.uniform(size), side="right")
        return np.minimum(idx, n - 1)


def stream(seed: int, *names) -> RngStream:
    """Shorthand for ``RngStream(seed).split(a).split(b)...``."""
    s = RngStream(seed)
    for name in names:
        s = s.split(name)
    return s
