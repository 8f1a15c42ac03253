"""Splittable random streams.

Every draw in the pipeline comes from a stream addressed by a path of labels
under one root seed, e.g. ``Rng(7).child("eval", "erosion", cls, i)``. Equal
seed and path give an identical draw sequence on any platform (numpy Philox
under a SeedSequence). Streams derived from disjoint paths are independent,
which is what makes per-image sampling reproducible regardless of batch
composition.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label):
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"stream labels must be nonnegative ints or strings, got {label}")
        return (int(label),)
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class Rng:
    """A named random stream; ``child`` derives an independent substream."""

    def __init__(self, seed, path=()):
        self.seed = int(seed)
        self.path = tuple(path)
        key = ()
        for label in self.path:
            key = key + _label_words(label)
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=key)))

    def child(self, *labels):
        return Rng(self.seed, self.path + tuple(labels))

    # draw methods delegate to the underlying generator

    def normal(self, shape=()):
        return self._gen.standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, shape=()):
        return self._gen.uniform(low, high, shape)

    def integers(self, low, high, shape=()):
        return self._gen.integers(low, high, shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"
