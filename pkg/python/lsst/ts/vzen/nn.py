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

"""Layer building blocks on top of the autodiff tensor."""

__all__ = [
    "Module",
    "Linear",
    "LayerNorm",
    "Embedding",
    "Mlp",
    "GatedMlp",
    "MultiHeadAttention",
    "make_mlp",
]

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .functional import gelu, layer_norm, scaled_dot_product_attention
from .rng import Rng
from .tensor import Tensor, parameter

INIT_STD = 0.02
"""Standard deviation of the normal weight initialization.
"""


class Module:
    """Base class for layers.

    Trainable parameters are the attributes that are tensors requiring
    gradients, plus those of child modules held directly or in lists.
    Iteration order is attribute definition order, which makes parameter
    names and ordering stable.
    """

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError()

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy values into the parameters, casting to their dtype.

        Raises
        ------
        KeyError
            If a parameter is missing from ``state`` or ``state`` has extra
            entries.
        ShapeError
            If a shape differs.
        """
        named = dict(self.named_parameters())
        missing = sorted(set(named) - set(state))
        extra = sorted(set(state) - set(named))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in named.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)


class Linear(Module):
    """Affine map ``x @ weight + bias`` with weight shape [in, out]."""

    def __init__(self, in_dim: int, out_dim: int, rng: Rng, bias: bool = True, dtype=np.float64):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = parameter(rng.normal((in_dim, out_dim), INIT_STD, dtype))
        self.bias = parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"Linear: input width {x.shape[-1]} != {self.in_dim}")
        out = x @ self.weight
        return out if self.bias is None else out + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float64):
        self.eps = eps
        self.gain = parameter(np.ones(dim, dtype=dtype))
        self.bias = parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Embedding(Module):
    """Lookup table of ``count`` learned vectors."""

    def __init__(self, count: int, dim: int, rng: Rng, dtype=np.float64):
        self.count = count
        self.weight = parameter(rng.normal((count, dim), INIT_STD, dtype))

    def forward(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.count):
            raise IndexError(f"Embedding: ids must lie in [0, {self.count})")
        return self.weight[ids]


class Mlp(Module):
    """linear -> GELU -> linear."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: Rng, dtype=np.float64):
        self.fc1 = Linear(in_dim, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, out_dim, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class GatedMlp(Module):
    """GELU-gated feed-forward: ``down(gelu(gate(x)) * up(x))``."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: Rng, dtype=np.float64):
        self.gate = Linear(in_dim, hidden, rng, bias=False, dtype=dtype)
        self.up = Linear(in_dim, hidden, rng, bias=False, dtype=dtype)
        self.fc2 = Linear(hidden, out_dim, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.gate(x)) * self.up(x))


def make_mlp(variant: str, dim: int, hidden: int, rng: Rng, dtype=np.float64) -> Module:
    """Return the feed-forward block for a backbone variant."""
    if variant == "gated":
        return GatedMlp(dim, hidden, dim, rng, dtype)
    return Mlp(dim, hidden, dim, rng, dtype)


class MultiHeadAttention(Module):
    """Multi-head attention with separate query and key/value input widths.

    Parameters
    ----------
    query_dim : `int`
        Width of the query input.
    kv_dim : `int`
        Width of the key and value inputs.
    inner_dim : `int`
        Attention width, split across ``heads``.
    heads : `int`
        Number of heads.
    rng : `Rng`
        Initialization stream.
    out_dim : `int`, optional
        Output width; ``query_dim`` by default.
    """

    def __init__(
        self,
        query_dim: int,
        kv_dim: int,
        inner_dim: int,
        heads: int,
        rng: Rng,
        out_dim: Optional[int] = None,
        dtype=np.float64,
    ):
        if inner_dim % heads != 0:
            raise ShapeError(f"attention width {inner_dim} not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(query_dim, inner_dim, rng, dtype=dtype)
        self.k_proj = Linear(kv_dim, inner_dim, rng, dtype=dtype)
        self.v_proj = Linear(kv_dim, inner_dim, rng, dtype=dtype)
        self.o_proj = Linear(inner_dim, out_dim or query_dim, rng, dtype=dtype)

    def forward(
        self,
        query: Tensor,
        key: Tensor,
        value: Optional[Tensor] = None,
        blocked: Optional[np.ndarray] = None,
    ) -> Tensor:
        value = key if value is None else value
        out = scaled_dot_product_attention(
            self.q_proj(query), self.k_proj(key), self.v_proj(value), self.heads, blocked
        )
        return self.o_proj(out)
