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

__all__ = ["BatchSource", "SampleBatchSource", "PretrainBatchSource"]

import logging
from abc import ABC, abstractmethod
from typing import List, Optional, Sequence

from .dataset import pretrain_samples
from .errors import ContractError
from .records import GuideSample
from .rng import Rng


class BatchSource(ABC):
    """Source of training batches base class.

    Implementations provide the samples of one micro-batch in ``output``
    after each call to `read`, as a list of `GuideSample`.
    """

    @abstractmethod
    def __init__(self, name: str, batch_size: int, log):
        """Initialize the source.

        Implementations should add any data parameters here.
        """
        pass

    @abstractmethod
    async def start(self):
        """Start the source.

        Implementations must prepare the samples and reset the read order.
        """
        pass

    @abstractmethod
    async def stop(self):
        """Stop the source."""
        pass

    @abstractmethod
    async def read(self):
        """Read the next micro-batch.

        Implementations must populate the output list.
        """
        pass


class SampleBatchSource(BatchSource):
    """Micro-batches drawn from a fixed list of samples.

    Samples are visited in epochs. Each epoch is a permutation drawn from
    its own seeded stream, so the read order depends only on ``seed``.

    Parameters
    ----------
    name : `str`
        Name of the source.
    samples : `list` [`GuideSample`]
        The training samples.
    batch_size : `int`
        Samples per micro-batch.
    seed : `int`
        Seed of the visiting order.
    shuffle : `bool`, optional
        Visit samples in index order if False.
    log : `logging.Logger`, optional
        Parent logger.

    Raises
    ------
    ContractError
        If ``samples`` is empty or ``batch_size`` is not positive.
    """

    def __init__(
        self,
        name: str,
        samples: Sequence[GuideSample],
        batch_size: int,
        seed: int = 0,
        shuffle: bool = True,
        log: Optional[logging.Logger] = None,
    ):
        if log is None:
            self.log = logging.getLogger(type(self).__name__)
        else:
            self.log = log.getChild(type(self).__name__)
        if batch_size < 1:
            raise ContractError(f"batch_size={batch_size} must be positive")
        self.name = name
        self.samples: List[GuideSample] = list(samples)
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle
        self.output: List[GuideSample] = []
        self._order: List[int] = []
        self._epoch = 0
        self._position = 0

    async def start(self):
        if not self.samples:
            raise ContractError(f"{self.name}: no samples to train on")
        self._epoch = 0
        self._position = 0
        self._order = self._epoch_order(0)
        self.output = []
        self.log.debug(f"{self.name}: {len(self.samples)} samples, batch size {self.batch_size}")

    async def stop(self):
        self.output = []

    async def read(self):
        batch = []
        while len(batch) < self.batch_size:
            if self._position == len(self._order):
                self._epoch += 1
                self._position = 0
                self._order = self._epoch_order(self._epoch)
            batch.append(self.samples[self._order[self._position]])
            self._position += 1
        self.output = batch

    def _epoch_order(self, epoch: int) -> List[int]:
        if not self.shuffle:
            return list(range(len(self.samples)))
        return Rng(self.seed).child(epoch).permutation(len(self.samples))


class PretrainBatchSource(SampleBatchSource):
    """Micro-batches of generated OCR and pure grounding samples.

    The pool of ``count`` samples is generated when the source starts.
    """

    def __init__(
        self,
        name: str,
        batch_size: int,
        seed: int = 0,
        count: int = 32,
        canvas: int = 160,
        log: Optional[logging.Logger] = None,
    ):
        super().__init__(name, [], batch_size, seed=seed, log=log)
        self.count = count
        self.canvas = canvas

    async def start(self):
        if not self.samples:
            self.samples = pretrain_samples(self.seed, self.count, self.canvas)
        await super().start()
