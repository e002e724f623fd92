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

"""Decoder backbone with visual expert layers and high resolution fusion.

Every layer computes queries, keys, values, the attention output map and the
MLP with one of two weight sets: the image expert at image positions and the
text expert at text positions. Attention itself is a single causal
attention over the whole sequence. When high resolution fusion is enabled,
each layer is followed by a cross-attention over the high resolution tokens.
"""

__all__ = [
    "TokenSequence",
    "BackboneOutput",
    "ExpertWeights",
    "CrossFusion",
    "BackboneLayer",
    "FusionBackbone",
]

import dataclasses
import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from .config import ModelConfig
from .errors import ContractError, ShapeError, TruncationError
from .functional import causal_mask, scaled_dot_product_attention
from .nn import INIT_STD, Embedding, LayerNorm, Linear, Module, MultiHeadAttention, make_mlp
from .projector import ProjectedTokens
from .rng import Rng
from .tensor import Tensor, concat, no_grad, parameter, where
from .tokenizer import SpecialToken
from .vision import PatchTokens


@dataclasses.dataclass(frozen=True, eq=False)
class TokenSequence:
    """Assembled backbone input.

    Attributes
    ----------
    embeddings : `Tensor`
        [length, model_dim]; the embedded ``IMG`` marker and the projected
        image tokens, followed by embedded text tokens.
    token_ids : `numpy.ndarray`
        [length] ids; the marker and every image position hold
        ``SpecialToken.IMG``.
    image_mask : `numpy.ndarray`
        [length] bool, True at the marker and image positions, which form a
        prefix.
    """

    embeddings: Tensor
    token_ids: np.ndarray
    image_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclasses.dataclass(frozen=True, eq=False)
class BackboneOutput:
    logits: Tensor
    hidden: Tensor
    last_hidden: Tensor
    last_index: int


class ExpertWeights(Module):
    """Attention maps and MLP of one expert."""

    def __init__(self, dim: int, hidden: int, variant: str, rng: Rng, dtype=np.float64):
        r = rng.split(5)
        self.q_proj = Linear(dim, dim, r[0], dtype=dtype)
        self.k_proj = Linear(dim, dim, r[1], dtype=dtype)
        self.v_proj = Linear(dim, dim, r[2], dtype=dtype)
        self.o_proj = Linear(dim, dim, r[3], dtype=dtype)
        self.mlp = make_mlp(variant, dim, hidden, r[4], dtype)


class CrossFusion(Module):
    """Residual cross-attention from every sequence position to all high
    resolution tokens, in a narrow attention width.
    """

    def __init__(
        self, dim: int, hr_dim: int, fusion_dim: int, heads: int, rng: Rng, dtype=np.float64
    ):
        self.hr_dim = hr_dim
        self.norm = LayerNorm(dim, dtype=dtype)
        self.kv_norm = LayerNorm(hr_dim, dtype=dtype)
        self.attn = MultiHeadAttention(dim, hr_dim, fusion_dim, heads, rng, out_dim=dim, dtype=dtype)

    def forward(self, x: Tensor, x_hi: Tensor) -> Tensor:
        if x_hi.shape[-1] != self.hr_dim:
            raise ShapeError(f"fusion: high resolution width {x_hi.shape[-1]} != {self.hr_dim}")
        return x + self.attn(self.norm(x), self.kv_norm(x_hi))


class BackboneLayer(Module):
    def __init__(self, config: ModelConfig, rng: Rng, dtype=np.float64):
        d = config.model_dim
        hidden = config.mlp_ratio * d
        self.heads = config.heads
        self.norm1 = LayerNorm(d, dtype=dtype)
        self.norm2 = LayerNorm(d, dtype=dtype)
        self.text_expert = ExpertWeights(d, hidden, config.backbone_variant, rng.child(0), dtype)
        self.image_expert = ExpertWeights(d, hidden, config.backbone_variant, rng.child(1), dtype)
        self.fusion = (
            CrossFusion(
                d,
                config.vision.hr_dim,
                config.fusion_dim,
                config.fusion_heads,
                rng.child(2),
                dtype,
            )
            if config.use_hrcvm
            else None
        )

    def _route(self, image_mask: np.ndarray, fn: Callable[[ExpertWeights], Tensor]) -> Tensor:
        if not image_mask.any():
            return fn(self.text_expert)
        if image_mask.all():
            return fn(self.image_expert)
        return where(image_mask[:, None], fn(self.image_expert), fn(self.text_expert))

    def self_attention(self, x: Tensor, image_mask: np.ndarray) -> Tensor:
        """Expert-routed causal self-attention block with its MLP; both
        sub-blocks are pre-norm and residual.
        """
        if image_mask.shape != (x.shape[0],):
            raise ShapeError(f"modality mask {image_mask.shape} does not match sequence {x.shape}")
        h = self.norm1(x)
        q = self._route(image_mask, lambda e: e.q_proj(h))
        k = self._route(image_mask, lambda e: e.k_proj(h))
        v = self._route(image_mask, lambda e: e.v_proj(h))
        attn = scaled_dot_product_attention(q, k, v, self.heads, causal_mask(x.shape[0]))
        x = x + self._route(image_mask, lambda e: e.o_proj(attn))
        h = self.norm2(x)
        return x + self._route(image_mask, lambda e: e.mlp(h))

    def forward(self, x: Tensor, image_mask: np.ndarray, x_hi: Optional[Tensor] = None) -> Tensor:
        x = self.self_attention(x, image_mask)
        if self.fusion is not None:
            x = self.fusion(x, x_hi)
        return x


class FusionBackbone(Module):
    """Decoder stack producing next-token logits and the grounding query.

    Parameters
    ----------
    config : `ModelConfig`
        Model sizes and flags.
    rng : `Rng`
        Initialization stream.
    log : `logging.Logger`, optional
        Parent logger.
    """

    def __init__(self, config: ModelConfig, rng: Rng, log: Optional[logging.Logger] = None):
        dtype = config.np_dtype
        d = config.model_dim
        self.config = config
        self.dtype = dtype
        if log is None:
            self.log = logging.getLogger(type(self).__name__)
        else:
            self.log = log.getChild(type(self).__name__)
        self.token_embedding = Embedding(config.vocab_size, d, rng.child(0), dtype)
        self.position = parameter(rng.child(1).normal((config.max_seq, d), INIT_STD, dtype))
        self.layers = [BackboneLayer(config, r, dtype) for r in rng.child(2).split(config.layers)]
        self.final_norm = LayerNorm(d, dtype=dtype)
        self.head = Linear(d, config.vocab_size, rng.child(3), dtype=dtype)

    @staticmethod
    def image_span(f_t: Optional[ProjectedTokens]) -> int:
        """Number of leading image positions: the ``IMG`` marker plus the
        projected tokens, or 0 without an image.
        """
        return 0 if f_t is None else f_t.num_tokens + 1

    def embed_and_assemble(
        self, f_t: Optional[ProjectedTokens], text_ids: Sequence[int]
    ) -> TokenSequence:
        """Concatenate the embedded ``IMG`` marker, the projected image
        tokens and the embedded text tokens.

        The marker is routed to the image expert with the tokens it
        introduces. Without image tokens the sequence is text only.

        Raises
        ------
        ContractError
            If ``text_ids`` is empty.
        TruncationError
            If the sequence would exceed ``max_seq``.
        ShapeError
            If the image tokens are not ``model_dim`` wide.
        """
        text_ids = np.asarray(text_ids, dtype=np.int64)
        if text_ids.size == 0:
            raise ContractError("a text prompt is required")
        image_count = self.image_span(f_t)
        length = image_count + text_ids.size
        if length > self.config.max_seq:
            raise TruncationError(
                f"sequence of {image_count} image and {text_ids.size} text tokens exceeds "
                f"max_seq={self.config.max_seq}"
            )
        if f_t is None:
            embeddings = self.token_embedding(text_ids)
        else:
            if f_t.dim != self.config.model_dim:
                raise ShapeError(f"image tokens width {f_t.dim} != {self.config.model_dim}")
            marker = self.token_embedding([int(SpecialToken.IMG)])
            embeddings = concat([marker, f_t.values, self.token_embedding(text_ids)], axis=0)
        token_ids = np.concatenate(
            [np.full(image_count, int(SpecialToken.IMG), dtype=np.int64), text_ids]
        )
        image_mask = np.arange(length) < image_count
        return TokenSequence(embeddings, token_ids, image_mask)

    def forward(self, seq: TokenSequence, x_hi: Optional[PatchTokens] = None) -> BackboneOutput:
        """Run the layer stack.

        Raises
        ------
        ContractError
            If ``x_hi`` is given without high resolution fusion configured,
            or missing with it.
        """
        if self.config.use_hrcvm != (x_hi is not None):
            raise ContractError(
                f"use_hrcvm={self.config.use_hrcvm} but high resolution tokens "
                f"{'given' if x_hi is not None else 'missing'}"
            )
        length = len(seq)
        x = seq.embeddings + self.position[:length]
        hi = None if x_hi is None else x_hi.values
        for layer in self.layers:
            x = layer(x, seq.image_mask, hi)
        hidden = self.final_norm(x)
        logits = self.head(hidden)
        not_pad = np.flatnonzero(seq.token_ids != int(SpecialToken.PAD))
        last_index = int(not_pad[-1]) if not_pad.size else length - 1
        return BackboneOutput(logits, hidden, hidden[last_index], last_index)

    def generate(
        self,
        f_t: Optional[ProjectedTokens],
        prompt_ids: Sequence[int],
        x_hi: Optional[PatchTokens] = None,
        max_new: Optional[int] = None,
        stop_id: int = int(SpecialToken.ACT_END),
    ) -> List[int]:
        """Greedy decoding.

        Generation stops before emitting ``stop_id``, after ``max_new``
        tokens, or when the sequence reaches ``max_seq``.

        Returns
        -------
        ids : `list` [`int`]
            Generated ids, without the stop id.
        """
        max_new = self.config.max_new_tokens if max_new is None else max_new
        ids = [int(i) for i in prompt_ids]
        if not ids:
            raise ContractError("generation needs a nonempty prompt")
        image_count = self.image_span(f_t)
        generated: List[int] = []
        with no_grad():
            while len(generated) < max_new and image_count + len(ids) < self.config.max_seq:
                out = self.forward(self.embed_and_assemble(f_t, ids), x_hi)
                next_id = int(np.argmax(out.logits.data[-1]))
                if next_id == stop_id:
                    break
                generated.append(next_id)
                ids.append(next_id)
        return generated
