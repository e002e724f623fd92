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

__all__ = ["constant_logit_backbone"]

import logging
from typing import Optional

import numpy as np

from ..backbone import FusionBackbone
from ..config import ModelConfig
from ..rng import Rng

# Margin of the chosen logit over all others.
CONSTANT_LOGIT = 50.0


def constant_logit_backbone(
    config: ModelConfig, token_id: int, seed: int = 0, log: Optional[logging.Logger] = None
) -> FusionBackbone:
    """Return a backbone whose logits always favor ``token_id``.

    The output head weights are zeroed and its bias is one-hot, so greedy
    decoding emits ``token_id`` at every step whatever the input.

    Raises
    ------
    IndexError
        If ``token_id`` is outside the vocabulary.
    """
    if not 0 <= token_id < config.vocab_size:
        raise IndexError(f"token_id={token_id} not in [0, {config.vocab_size})")
    backbone = FusionBackbone(config, Rng(seed).child(3), log=log)
    backbone.head.weight.data[...] = 0
    bias = np.zeros(config.vocab_size, dtype=config.np_dtype)
    bias[token_id] = CONSTANT_LOGIT
    backbone.head.bias.data = bias
    return backbone
