# This file is part of ts_vzen.
#
# Developed for the Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

__all__ = ["Rng"]

from typing import Sequence

import numpy as np


class Rng:
    """Seeded random number source.

    Wraps a PCG64 bit generator, whose draw sequence is identical across
    runs and platforms for the same seed. Independent child streams are
    derived with `numpy.random.SeedSequence` spawn keys, so the stream of a
    record depends only on (seed, index) and never on how work is split.

    Parameters
    ----------
    seed : `int`
        64-bit seed.
    spawn_key : `tuple` of `int`, optional
        Path of this stream below the root seed.
    """

    def __init__(self, seed: int, spawn_key: Sequence[int] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, spawn_key={self.spawn_key})"

    @property
    def state(self) -> dict:
        """Internal bit generator state."""
        return self._generator.bit_generator.state

    def child(self, index: int) -> "Rng":
        """Return the independent stream number ``index`` below this one."""
        return Rng(self.seed, self.spawn_key + (int(index),))

    def split(self, count: int) -> list:
        """Return ``count`` independent child streams."""
        return [self.child(i) for i in range(count)]

    def normal(self, shape, std: float = 1.0, dtype=np.float64) -> np.ndarray:
        return (self._generator.standard_normal(shape) * std).astype(dtype)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._generator.uniform(low, high, size)

    def integers(self, low: int, high: int) -> int:
        """Return an integer in [low, high)."""
        return int(self._generator.integers(low, high))

    def choice(self, items: Sequence):
        return items[self.integers(0, len(items))]

    def sample(self, items: Sequence, count: int) -> list:
        """Return ``count`` distinct items in random order."""
        picks = self._generator.choice(len(items), size=count, replace=False)
        return [items[int(i)] for i in picks]

    def permutation(self, count: int) -> list:
        return [int(i) for i in self._generator.permutation(count)]
