"""Deterministic, splittable random streams.

A stream is a 64-bit seed plus a path of tags.  Substreams hang off their
parent through numpy SeedSequence spawn keys, so any (seed, path) pair
produces the same draws on every platform and run, regardless of how many
sibling streams exist or in what order they are consumed.  The generator
is PCG64; string tags are folded to integers with CRC-32.  Both choices
are fixed so that artifacts trained from the same seed are reproducible
byte for byte.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ConfigError


def _tag_to_int(tag: str | int) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag)


class Rng:
    """Seeded PCG64 stream with derivable substreams."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.path = tuple(int(p) for p in path)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=self.path))
        )

    def substream(self, *tags: str | int) -> "Rng":
        """Derive an independent stream keyed by the given tags."""
        return Rng(self.seed, self.path + tuple(_tag_to_int(t) for t in tags))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size=size)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"
