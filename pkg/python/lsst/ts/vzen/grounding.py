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

"""Box prediction from the backbone query and the feature pyramid.

The head projects the grounding query to the decoder width and refines it
with decoder blocks that cross-attend over every cell of every pyramid
level. Keys carry fixed 2-D sine position encodings plus a learned level
embedding. A small MLP maps the refined query to a box through a sigmoid
and to a confidence logit.
"""

__all__ = [
    "BBox",
    "GroundingOutput",
    "DecoderBlock",
    "GroundingHead",
    "iou",
    "giou",
    "box_losses",
    "grounding_loss",
    "confidence_loss",
    "sine_position_encoding",
    "encode_box_buckets",
    "decode_box_buckets",
    "COORDINATE_TOKEN_OFFSET",
]

import dataclasses
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import ModelConfig
from .errors import BoxError, ShapeError
from .functional import binary_cross_entropy_with_logits
from .nn import INIT_STD, LayerNorm, Linear, Mlp, Module, MultiHeadAttention
from .rng import Rng
from .tensor import Tensor, concat, maximum, minimum, no_grad, parameter
from .tokenizer import BASE_VOCAB_SIZE
from .vision import MultiScaleFeatures

_BOX_TOLERANCE = 1.0e-6
_MIN_SIZE = 1.0e-6

COORDINATE_TOKEN_OFFSET = BASE_VOCAB_SIZE
"""Id of coordinate bucket 0 when boxes are written as text.
"""


@dataclasses.dataclass(frozen=True)
class BBox:
    """Box normalized to the image size, as center and size.

    Raises
    ------
    BoxError
        If a size is not in (0, 1] or a corner lies outside the image.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise BoxError(f"{name}={value} is not finite")
        if not (0 < self.w <= 1 and 0 < self.h <= 1):
            raise BoxError(f"box size ({self.w}, {self.h}) outside (0, 1]")
        x0, y0, x1, y1 = self.to_xyxy()
        if min(x0, y0) < -_BOX_TOLERANCE or max(x1, y1) > 1 + _BOX_TOLERANCE:
            raise BoxError(f"box corners ({x0}, {y0}, {x1}, {y1}) outside the image")

    @classmethod
    def from_xyxy(cls, x0: float, y0: float, x1: float, y1: float) -> "BBox":
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    @classmethod
    def clamped_from(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        """Build a valid box from raw values by clipping its corners to the
        image and enforcing a tiny minimum size.
        """
        corners = []
        for center, size in ((cx, w), (cy, h)):
            lo = min(max(center - size / 2, 0.0), 1.0 - _MIN_SIZE)
            hi = max(min(center + size / 2, 1.0), lo + _MIN_SIZE)
            corners.append((lo, hi))
        (x0, x1), (y0, y1) = corners
        return cls.from_xyxy(x0, y0, x1, y1)

    def to_xyxy(self) -> Tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    def clamped(self) -> "BBox":
        return BBox.clamped_from(self.cx, self.cy, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)


def _corner_area(x0, y0, x1, y1) -> float:
    return max(x1 - x0, 0.0) * max(y1 - y0, 0.0)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; zero when the union has no area."""
    ax0, ay0, ax1, ay1 = a.to_xyxy()
    bx0, by0, bx1, by1 = b.to_xyxy()
    inter = _corner_area(max(ax0, bx0), max(ay0, by0), min(ax1, bx1), min(ay1, by1))
    union = _corner_area(ax0, ay0, ax1, ay1) + _corner_area(bx0, by0, bx1, by1) - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU, in [-1, 1]."""
    ax0, ay0, ax1, ay1 = a.to_xyxy()
    bx0, by0, bx1, by1 = b.to_xyxy()
    inter = _corner_area(max(ax0, bx0), max(ay0, by0), min(ax1, bx1), min(ay1, by1))
    union = _corner_area(ax0, ay0, ax1, ay1) + _corner_area(bx0, by0, bx1, by1) - inter
    hull = _corner_area(min(ax0, bx0), min(ay0, by0), max(ax1, bx1), max(ay1, by1))
    if union <= 0 or hull <= 0:
        return -1.0
    return inter / union - (hull - union) / hull


def box_losses(pred: Tensor, target: BBox) -> Tuple[Tensor, Tensor]:
    """Return the L1 distance and ``1 - GIoU`` between a predicted
    (cx, cy, w, h) tensor and ``target``.
    """
    if pred.shape != (4,):
        raise ShapeError(f"predicted box must have shape (4,), got {pred.shape}")
    t = target.as_array().astype(pred.dtype)
    l1 = (pred - t).abs().sum()

    cx, cy, w, h = pred[0], pred[1], pred[2], pred[3]
    px0, px1 = cx - w * 0.5, cx + w * 0.5
    py0, py1 = cy - h * 0.5, cy + h * 0.5
    tx0, ty0, tx1, ty1 = target.to_xyxy()
    inter_w = (minimum(px1, tx1) - maximum(px0, tx0)).relu()
    inter_h = (minimum(py1, ty1) - maximum(py0, ty0)).relu()
    inter = inter_w * inter_h
    union = (px1 - px0) * (py1 - py0) + (tx1 - tx0) * (ty1 - ty0) - inter
    hull = (maximum(px1, tx1) - minimum(px0, tx0)) * (maximum(py1, ty1) - minimum(py0, ty0))
    generalized = inter / union - (hull - union) / hull
    return l1, 1.0 - generalized


def grounding_loss(pred: Tensor, target: BBox, l1_w: float = 5.0, giou_w: float = 2.0) -> Tensor:
    """``l1_w * L1 + giou_w * (1 - GIoU)``; zero when ``pred`` equals
    ``target``.
    """
    l1, giou_term = box_losses(pred, target)
    return l1 * l1_w + giou_term * giou_w


def sine_position_encoding(height: int, width: int, dim: int) -> np.ndarray:
    """Fixed 2-D sine encoding, [height * width, dim], row-major cells.

    The first half of the channels encodes the row, the second half the
    column, each as interleaved sine and cosine of the normalized position
    at geometrically spaced frequencies.
    """
    if dim % 4 != 0:
        raise ShapeError(f"position encoding width {dim} must be a multiple of 4")
    quarter = dim // 4
    frequencies = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    ys = (np.arange(height) + 0.5) / height * 2 * math.pi
    xs = (np.arange(width) + 0.5) / width * 2 * math.pi

    def encode(values: np.ndarray) -> np.ndarray:
        angles = values[:, None] * frequencies[None, :]
        return np.stack([np.sin(angles), np.cos(angles)], axis=-1).reshape(len(values), 2 * quarter)

    rows = np.repeat(encode(ys), width, axis=0)
    cols = np.tile(encode(xs), (height, 1))
    return np.concatenate([rows, cols], axis=1)


@dataclasses.dataclass(frozen=True, eq=False)
class GroundingOutput:
    """Raw head output: ``box`` is (cx, cy, w, h) after the sigmoid."""

    box: Tensor
    confidence_logit: Tensor

    def bbox(self) -> BBox:
        return BBox.clamped_from(*(float(v) for v in self.box.data))

    def confidence(self) -> float:
        return float(1.0 / (1.0 + np.exp(-float(self.confidence_logit.data))))


class DecoderBlock(Module):
    """Pre-norm cross-attention of the query over the memory, then MLP."""

    def __init__(self, dim: int, heads: int, rng: Rng, dtype=np.float64):
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.cross_attn = MultiHeadAttention(dim, dim, dim, heads, rng.child(0), dtype=dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.mlp = Mlp(dim, 4 * dim, dim, rng.child(1), dtype=dtype)

    def forward(self, query: Tensor, keys: Tensor, memory: Tensor) -> Tensor:
        query = query + self.cross_attn(self.norm1(query), keys, memory)
        return query + self.mlp(self.norm2(query))


class GroundingHead(Module):
    """Single-query detection head.

    Parameters
    ----------
    config : `ModelConfig`
        Supplies the query width, the pyramid shape and the decoder sizes.
    rng : `Rng`
        Initialization stream.
    """

    def __init__(self, config: ModelConfig, rng: Rng, dtype=np.float64):
        vision = config.vision
        dd = config.decoder_dim
        self.level_dims = tuple(vision.ms_dims)
        self.level_sizes = tuple(vision.ms_sizes)
        self.query_proj = Linear(config.model_dim, dd, rng.child(0), dtype=dtype)
        self.input_proj = [
            Linear(dim, dd, r, dtype=dtype)
            for dim, r in zip(self.level_dims, rng.child(1).split(len(self.level_dims)))
        ]
        self.level_embed = parameter(rng.child(2).normal((len(self.level_dims), dd), INIT_STD, dtype))
        self.blocks = [
            DecoderBlock(dd, config.decoder_heads, r, dtype)
            for r in rng.child(3).split(config.decoder_layers)
        ]
        self.norm = LayerNorm(dd, dtype=dtype)
        self.bbox_head = Mlp(dd, dd, 5, rng.child(4), dtype=dtype)
        self.position_encodings = [
            sine_position_encoding(size, size, dd).astype(dtype) for size in self.level_sizes
        ]

    def forward(self, query: Tensor, f_ms: MultiScaleFeatures) -> GroundingOutput:
        """Predict one box.

        Raises
        ------
        ShapeError
            If the pyramid does not match the configured widths and sizes.
        """
        if tuple(f_ms.dims) != self.level_dims:
            raise ShapeError(f"pyramid widths {tuple(f_ms.dims)} != {self.level_dims}")
        memories, keys = [], []
        for i, level in enumerate(f_ms.levels):
            h, w, d = level.shape
            if (h, w) != (self.level_sizes[i],) * 2:
                raise ShapeError(f"pyramid level {i} is {h}x{w}, expected {self.level_sizes[i]}")
            memory = self.input_proj[i](level.reshape(h * w, d))
            memories.append(memory)
            keys.append(memory + self.position_encodings[i] + self.level_embed[i])
        memory = concat(memories, axis=0)
        keys = concat(keys, axis=0)

        x = self.query_proj(query.reshape(1, -1))
        for block in self.blocks:
            x = block(x, keys, memory)
        out = self.bbox_head(self.norm(x)).reshape(5)
        return GroundingOutput(out[:4].sigmoid(), out[4])

    def ground(self, query: Tensor, f_ms: MultiScaleFeatures) -> Tuple[BBox, float]:
        """Return the clamped box and its confidence in [0, 1]."""
        with no_grad():
            out = self.forward(query, f_ms)
        return out.bbox(), out.confidence()


def confidence_loss(output: GroundingOutput, target: BBox) -> Tensor:
    """Binary cross-entropy of the confidence against the IoU of the
    predicted box, which is treated as a constant.
    """
    quality = iou(output.bbox(), target)
    return binary_cross_entropy_with_logits(output.confidence_logit, quality)


def encode_box_buckets(box: BBox, buckets: int) -> list:
    """Write ``box`` as four coordinate tokens x0 y0 x1 y1.

    Bucket ``b`` of a lower corner is the interval [b / buckets,
    (b + 1) / buckets); an upper corner in bucket ``b`` decodes to
    (b + 1) / buckets, so a decoded box always has positive size.
    """
    x0, y0, x1, y1 = box.to_xyxy()
    lows = [min(max(int(math.floor(v * buckets)), 0), buckets - 1) for v in (x0, y0)]
    highs = [
        min(max(int(math.ceil(v * buckets)) - 1, low), buckets - 1) for v, low in zip((x1, y1), lows)
    ]
    return [COORDINATE_TOKEN_OFFSET + b for b in lows + highs]


def decode_box_buckets(ids: Sequence[int], buckets: int) -> Optional[BBox]:
    """Read the first four coordinate tokens of ``ids`` back into a box.

    Returns None if there are fewer than four or they do not describe a
    box.
    """
    values = [
        int(i) - COORDINATE_TOKEN_OFFSET
        for i in ids
        if COORDINATE_TOKEN_OFFSET <= int(i) < COORDINATE_TOKEN_OFFSET + buckets
    ]
    if len(values) < 4:
        return None
    bx0, by0, bx1, by1 = values[:4]
    if bx1 < bx0 or by1 < by0:
        return None
    return BBox.from_xyxy(bx0 / buckets, by0 / buckets, (bx1 + 1) / buckets, (by1 + 1) / buckets)
