"""Portable, splittable random numbers.

Raw 64-bit words come from the Philox counter-based generator, whose output
stream is fixed by the algorithm. Every derived quantity (uniforms, normals,
permutations) is computed here from those raw words, so a given seed yields
the same numbers on every platform and numpy version.
"""
from __future__ import annotations

import zlib

import numpy as np

_TWO_POW_M53 = 2.0 ** -53


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    tag = int(tag)
    if tag < 0:
        raise ValueError(f"rng tags must be non-negative, got {tag}")
    return tag


class Rng:
    """Deterministic random stream identified by ``(seed, path)``.

    ``split`` derives an independent child stream without consuming any
    numbers from the parent, which keeps results independent of call order.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.path = tuple(_tag_to_int(t) for t in path)
        # path length is part of the entropy: SeedSequence ignores trailing zeros
        entropy = [self.seed, len(self.path), *self.path]
        key = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"

    def split(self, *tags: int | str) -> Rng:
        return Rng(self.seed, self.path + tuple(_tag_to_int(t) for t in tags))

    def raw(self, size) -> np.ndarray:
        n = int(np.prod(size, dtype=np.int64))
        words = self._bitgen.random_raw(n) if n else np.zeros(0, dtype=np.uint64)
        return np.asarray(words, dtype=np.uint64).reshape(size)

    def random(self, size=()) -> np.ndarray | float:
        """Uniform floats in [0, 1) with 53 random bits."""
        u = (self.raw(size) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
        return float(u) if np.ndim(u) == 0 else u

    def uniform(self, low: float, high: float, size=()):
        return low + (high - low) * self.random(size)

    def normal(self, size=(), scale: float = 1.0):
        """Standard normal draws via Box-Muller."""
        n = int(np.prod(size, dtype=np.int64))
        half = (n + 1) // 2
        u1 = 1.0 - self.random((half,))  # (0, 1], safe for log
        u2 = self.random((half,))
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        z = scale * z.reshape(size)
        return float(z) if np.ndim(z) == 0 else z

    def integers(self, low: int, high: int, size=()):
        """Integers in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        span = np.uint64(high - low)
        v = (self.raw(size) % span).astype(np.int64) + low
        return int(v) if np.ndim(v) == 0 else v

    def permutation(self, n: int) -> np.ndarray:
        keys = self.raw((n,))
        return np.argsort(keys, kind="stable").astype(np.int64)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``, in random order."""
        if k > n:
            raise ValueError(f"cannot choose {k} of {n} without replacement")
        return self.permutation(n)[:k]
