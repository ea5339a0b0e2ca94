"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by ``(seed, stream)``
where ``stream`` is a tuple of non-negative integers, so draws for one
experiment cell never depend on how many other cells ran before it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if any(int(s) < 0 for s in self.stream):
            raise ValueError("stream ids must be non-negative")

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(i) for i in ids))

    @cached_property
    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))

    def integers(self, high: int, size=None):
        return self.generator.integers(0, high, size=size)

    def binomial(self, n: int, p):
        return self.generator.binomial(n, p)
