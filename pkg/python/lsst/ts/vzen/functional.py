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

"""Fused differentiable functions used by the model layers.

These have hand-written backward passes instead of being composed from the
elementwise operations in `tensor`, which keeps the graphs short and the
numerics stable (max subtraction in the softmax family).
"""

__all__ = [
    "IGNORE_INDEX",
    "MASK_VALUE",
    "softmax",
    "log_softmax",
    "layer_norm",
    "gelu",
    "cross_entropy",
    "binary_cross_entropy_with_logits",
    "scaled_dot_product_attention",
    "causal_mask",
]

import math
from typing import Optional, Sequence

import numpy as np

from .errors import ShapeError
from .tensor import Function, Tensor, masked_fill

IGNORE_INDEX = -100
"""Target value excluded from the cross-entropy mean.
"""

MASK_VALUE = -1.0e9
"""Score given to disallowed attention positions.

Large enough that its softmax weight underflows to exactly zero, yet finite
so the non-finite checks never trip.
"""

_GELU_SCALE = math.sqrt(2.0 / math.pi)


class Softmax(Function):
    def forward(self, x, axis):
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        exps = np.exp(shifted)
        self.out = exps / np.sum(exps, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        dot = np.sum(grad * self.out, axis=self.axis, keepdims=True)
        return (self.out * (grad - dot),)


class LogSoftmax(Function):
    def forward(self, x, axis):
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
        self.probs = np.exp(out)
        return out

    def backward(self, grad):
        return (grad - self.probs * np.sum(grad, axis=self.axis, keepdims=True),)


class LayerNorm(Function):
    def forward(self, x, gain, bias, eps):
        if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
            raise ShapeError(
                f"layer_norm: gain {gain.shape} and bias {bias.shape} must match last axis of {x.shape}"
            )
        mean = np.mean(x, axis=-1, keepdims=True)
        centered = x - mean
        var = np.mean(centered * centered, axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.normed = centered * self.inv_std
        self.gain = gain
        return self.normed * gain + bias

    def backward(self, grad):
        reduce_axes = tuple(range(grad.ndim - 1))
        grad_gain = np.sum(grad * self.normed, axis=reduce_axes)
        grad_bias = np.sum(grad, axis=reduce_axes)
        grad_normed = grad * self.gain
        grad_x = self.inv_std * (
            grad_normed
            - np.mean(grad_normed, axis=-1, keepdims=True)
            - self.normed * np.mean(grad_normed * self.normed, axis=-1, keepdims=True)
        )
        return grad_x, grad_gain, grad_bias


class Gelu(Function):
    """GELU, tanh approximation."""

    def forward(self, x):
        self.x = x
        self.inner = np.tanh(_GELU_SCALE * (x + 0.044715 * x * x * x))
        return 0.5 * x * (1.0 + self.inner)

    def backward(self, grad):
        x, inner = self.x, self.inner
        d_inner = (1.0 - inner * inner) * _GELU_SCALE * (1.0 + 3.0 * 0.044715 * x * x)
        return (grad * (0.5 * (1.0 + inner) + 0.5 * x * d_inner),)


class CrossEntropy(Function):
    def forward(self, logits, targets, ignore_index):
        if logits.ndim != 2 or targets.shape != (logits.shape[0],):
            raise ShapeError(
                f"cross_entropy: logits {logits.shape} and targets {targets.shape} disagree"
            )
        vocab = logits.shape[1]
        self.valid = targets != ignore_index
        bad = self.valid & ((targets < 0) | (targets >= vocab))
        if np.any(bad):
            position = int(np.flatnonzero(bad)[0])
            raise IndexError(
                f"cross_entropy: target {int(targets[position])} at position {position} "
                f"outside [0, {vocab})"
            )
        self.count = int(np.count_nonzero(self.valid))
        self.shape, self.dtype = logits.shape, logits.dtype
        if self.count == 0:
            self.probs = None
            return np.zeros((), dtype=logits.dtype)
        rows = np.flatnonzero(self.valid)
        self.rows, self.cols = rows, targets[rows].astype(np.int64)
        picked = logits[rows]
        shifted = picked - np.max(picked, axis=-1, keepdims=True)
        log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
        self.probs = np.exp(log_probs)
        nll = -log_probs[np.arange(rows.size), self.cols]
        return np.asarray(np.sum(nll) / self.count, dtype=logits.dtype)

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=self.dtype)
        if self.count == 0:
            return (full,)
        local = self.probs.copy()
        local[np.arange(self.rows.size), self.cols] -= 1.0
        full[self.rows] = local * (grad / self.count)
        return (full,)


class BinaryCrossEntropyWithLogits(Function):
    def forward(self, logits, target):
        self.logits, self.target = logits, target
        loss = np.maximum(logits, 0) - logits * target + np.log1p(np.exp(-np.abs(logits)))
        return np.asarray(np.mean(loss), dtype=logits.dtype)

    def backward(self, grad):
        probs = 1.0 / (1.0 + np.exp(-self.logits))
        return (grad * (probs - self.target) / self.logits.size,)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis``, stabilized by subtracting the maximum."""
    return Softmax.apply(x, axis=axis)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then scale."""
    return LayerNorm.apply(x, gain, bias, eps=eps)


def gelu(x: Tensor) -> Tensor:
    return Gelu.apply(x)


def cross_entropy(
    logits: Tensor, targets: Sequence[int], ignore_index: int = IGNORE_INDEX
) -> Tensor:
    """Mean negative log-likelihood over the positions not ignored.

    Returns zero, with a zero gradient, when every position is ignored.

    Raises
    ------
    IndexError
        If a target is outside the vocabulary and not ``ignore_index``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    return CrossEntropy.apply(logits, targets=targets, ignore_index=ignore_index)


def binary_cross_entropy_with_logits(logits: Tensor, target) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against ``target``."""
    target = np.asarray(target, dtype=logits.dtype)
    return BinaryCrossEntropyWithLogits.apply(logits, target=target)


def causal_mask(length: int) -> np.ndarray:
    """Return a boolean [length, length] array, True where j > i."""
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def scaled_dot_product_attention(
    q: Tensor, k: Tensor, v: Tensor, heads: int, blocked: Optional[np.ndarray] = None
) -> Tensor:
    """Multi-head attention on already projected queries, keys and values.

    Parameters
    ----------
    q : `Tensor`
        Queries, shape [..., Lq, D].
    k, v : `Tensor`
        Keys and values, shape [..., Lk, D].
    heads : `int`
        Number of heads; must divide D.
    blocked : `numpy.ndarray`, optional
        Boolean [Lq, Lk] array, True where attention is not allowed.

    Returns
    -------
    out : `Tensor`
        Shape [..., Lq, D].
    """
    *lead, length_q, dim = q.shape
    length_k = k.shape[-2]
    if dim % heads != 0:
        raise ShapeError(f"attention: width {dim} not divisible by {heads} heads")
    if k.shape[-1] != dim or v.shape[-1] != dim:
        raise ShapeError(f"attention: widths disagree q={q.shape} k={k.shape} v={v.shape}")
    head_dim = dim // heads
    n = len(lead)
    # [..., L, D] -> [..., h, L, d]
    order = tuple(range(n)) + (n + 1, n, n + 2)
    qh = q.reshape(*lead, length_q, heads, head_dim).transpose(order)
    kh = k.reshape(*lead, length_k, heads, head_dim).transpose(order)
    vh = v.reshape(*lead, length_k, heads, head_dim).transpose(order)
    scores = (qh @ kh.swapaxes(-1, -2)) * (1.0 / math.sqrt(head_dim))
    if blocked is not None:
        scores = masked_fill(scores, blocked, MASK_VALUE)
    weights = softmax(scores, axis=-1)
    out = (weights @ vh).transpose(order)
    return out.reshape(*lead, length_q, dim)
