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

__all__ = ["ProjectedTokens", "ProjectionAdapter"]

import dataclasses

import numpy as np

from .errors import ShapeError
from .functional import gelu
from .nn import Linear, Module
from .rng import Rng
from .tensor import Tensor
from .vision import PatchTokens


@dataclasses.dataclass(frozen=True)
class ProjectedTokens:
    """Image tokens in the backbone embedding space, [tokens, model_dim]."""

    values: Tensor

    @property
    def num_tokens(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


class ProjectionAdapter(Module):
    """Map vision features to the backbone width, token by token.

    Parameters
    ----------
    in_dim : `int`
        Vision encoder width.
    out_dim : `int`
        Backbone width.
    rng : `Rng`
        Initialization stream.
    layers : `int`, optional
        Number of linear layers, with GELU between them. The hidden width
        is ``out_dim``.
    use_mlp : `bool`, optional
        If False, use a single linear map regardless of ``layers``.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: Rng,
        layers: int = 2,
        use_mlp: bool = True,
        dtype=np.float64,
    ):
        self.in_dim = in_dim
        count = layers if use_mlp else 1
        widths = [in_dim] + [out_dim] * count
        self.layers = [
            Linear(widths[i], widths[i + 1], r, dtype=dtype)
            for i, r in enumerate(rng.split(count))
        ]

    def forward(self, f_lr: PatchTokens) -> ProjectedTokens:
        """Project ``f_lr``; the token count is unchanged.

        Raises
        ------
        ShapeError
            If the feature width is not ``in_dim``.
        """
        x = f_lr.values
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"projector: feature width {x.shape[-1]} != {self.in_dim}")
        for i, layer in enumerate(self.layers):
            if i > 0:
                x = gelu(x)
            x = layer(x)
        return ProjectedTokens(x)
