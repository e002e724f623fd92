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

"""Image encoders: patch embedding, the plain transformer encoders used for
the low and high resolution views, and the windowed multi-scale pyramid.
"""

__all__ = [
    "ImageRaster",
    "PatchTokens",
    "MultiScaleFeatures",
    "PatchEmbed",
    "EncoderBlock",
    "VisionEncoder",
    "PatchMerging",
    "WindowBlock",
    "MultiScaleBackbone",
    "window_partition",
    "window_reverse",
]

import dataclasses
import pathlib
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image

from .config import VisionConfig
from .errors import ShapeError
from .nn import INIT_STD, LayerNorm, Linear, Mlp, Module, MultiHeadAttention
from .rng import Rng
from .tensor import Tensor, parameter


@dataclasses.dataclass(frozen=True, eq=False)
class ImageRaster:
    """RGB image with float values in [0, 1], shape [height, width, 3].

    Values outside [0, 1] are clamped on construction.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 3:
            raise ShapeError(f"image must have shape [H, W, 3], got {values.shape}")
        object.__setattr__(self, "values", np.clip(values, 0.0, 1.0))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_png(
        cls, path: Union[str, pathlib.Path], resolution: Optional[int] = None
    ) -> "ImageRaster":
        """Read an 8-bit RGB PNG, optionally resized to a square."""
        with Image.open(path) as image:
            rgb = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
        raster = cls(rgb)
        return raster if resolution is None else raster.resized(resolution)

    def to_png(self, path: Union[str, pathlib.Path]) -> None:
        """Write the raster as an 8-bit RGB PNG without alpha."""
        pixels = np.round(self.values * 255.0).astype(np.uint8)
        Image.fromarray(pixels).save(path, format="PNG")

    def resized(self, resolution: int) -> "ImageRaster":
        """Return a square ``resolution`` copy, box filtered per channel."""
        if self.height == resolution and self.width == resolution:
            return self
        channels = [
            np.asarray(
                Image.fromarray(self.values[:, :, c].astype(np.float32)).resize(
                    (resolution, resolution), Image.Resampling.BOX
                ),
                dtype=np.float64,
            )
            for c in range(3)
        ]
        return ImageRaster(np.stack(channels, axis=-1))

    def to_tensor(self, dtype=np.float64, requires_grad: bool = False) -> Tensor:
        return Tensor(self.values.astype(dtype), requires_grad=requires_grad)


@dataclasses.dataclass(frozen=True)
class PatchTokens:
    """Encoded patch tokens, ``values`` of shape [grid * grid, dim]."""

    values: Tensor
    grid: int

    @property
    def num_tokens(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclasses.dataclass(frozen=True)
class MultiScaleFeatures:
    """Feature pyramid; level ``i`` has shape [h_i, w_i, d_i]."""

    levels: List[Tensor]
    strides: Tuple[int, ...]

    @property
    def sizes(self) -> List[Tuple[int, int]]:
        return [level.shape[:2] for level in self.levels]

    @property
    def dims(self) -> List[int]:
        return [level.shape[2] for level in self.levels]


class PatchEmbed(Module):
    """Split an image into square patches and map each to ``dim`` values.

    Parameters
    ----------
    resolution : `int`
        Expected image side, in pixels.
    patch : `int`
        Patch side, in pixels.
    dim : `int`
        Token width.
    rng : `Rng`
        Initialization stream.
    """

    def __init__(self, resolution: int, patch: int, dim: int, rng: Rng, dtype=np.float64):
        if resolution % patch != 0:
            raise ShapeError(f"resolution {resolution} not divisible by patch {patch}")
        self.resolution, self.patch = resolution, patch
        self.grid = resolution // patch
        self.proj = Linear(patch * patch * 3, dim, rng, dtype=dtype)
        self.position = parameter(rng.normal((self.grid * self.grid, dim), INIT_STD, dtype))

    def patchify(self, image: Tensor) -> Tensor:
        """Return the flattened patches of ``image`` in row-major patch
        order, shape [grid * grid, patch * patch * 3].
        """
        if image.shape != (self.resolution, self.resolution, 3):
            raise ShapeError(
                f"expected a {self.resolution}x{self.resolution}x3 image, got {image.shape}"
            )
        g, p = self.grid, self.patch
        patches = image.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4)
        return patches.reshape(g * g, p * p * 3)

    def embed_patches(self, image: Tensor) -> Tensor:
        """Linear patch embedding, before positions are added."""
        return self.proj(self.patchify(image))

    def forward(self, image: Tensor) -> Tensor:
        return self.embed_patches(image) + self.position


class EncoderBlock(Module):
    """Pre-norm transformer block: self-attention then MLP, each residual."""

    def __init__(self, dim: int, heads: int, rng: Rng, mlp_ratio: int = 4, dtype=np.float64):
        self.norm1 = LayerNorm(dim, dtype=dtype)
        self.attn = MultiHeadAttention(dim, dim, dim, heads, rng, dtype=dtype)
        self.norm2 = LayerNorm(dim, dtype=dtype)
        self.mlp = Mlp(dim, mlp_ratio * dim, dim, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h)
        return x + self.mlp(self.norm2(x))


class VisionEncoder(Module):
    """Patch embedding followed by ``depth`` encoder blocks.

    Used both for the low resolution view and, narrower, for the high
    resolution view.
    """

    def __init__(
        self,
        resolution: int,
        patch: int,
        dim: int,
        depth: int,
        heads: int,
        rng: Rng,
        dtype=np.float64,
    ):
        self.resolution = resolution
        self.dtype = np.dtype(dtype)
        self.patch_embed = PatchEmbed(resolution, patch, dim, rng.child(0), dtype)
        block_rngs = rng.child(1).split(depth)
        self.blocks = [EncoderBlock(dim, heads, r, dtype=dtype) for r in block_rngs]

    def encode(self, image: Tensor) -> Tensor:
        x = self.patch_embed(image)
        for block in self.blocks:
            x = block(x)
        return x

    def forward(self, image: Union[ImageRaster, Tensor]) -> PatchTokens:
        """Encode ``image``, which must already be at the encoder resolution.

        Raises
        ------
        ShapeError
            If the image has the wrong resolution.
        """
        if isinstance(image, ImageRaster):
            image = image.to_tensor(self.dtype)
        return PatchTokens(self.encode(image), self.patch_embed.grid)


def window_partition(x: Tensor, window: int) -> Tensor:
    """[h, w, d] -> [windows, window * window, d], row-major windows."""
    h, w, d = x.shape
    x = x.reshape(h // window, window, w // window, window, d).transpose(0, 2, 1, 3, 4)
    return x.reshape((h // window) * (w // window), window * window, d)


def window_reverse(windows: Tensor, window: int, h: int, w: int) -> Tensor:
    d = windows.shape[-1]
    x = windows.reshape(h // window, w // window, window, window, d).transpose(0, 2, 1, 3, 4)
    return x.reshape(h, w, d)


class WindowBlock(Module):
    """Encoder block whose attention is restricted to non-overlapping
    square windows of the feature map.
    """

    def __init__(self, dim: int, heads: int, window: int, rng: Rng, dtype=np.float64):
        self.window = window
        self.block = EncoderBlock(dim, heads, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        h, w, _ = x.shape
        window = min(self.window, h, w)
        out = self.block(window_partition(x, window))
        return window_reverse(out, window, h, w)


class PatchMerging(Module):
    """Halve the spatial size: concatenate each 2x2 group, normalize and
    map to the next level width.
    """

    def __init__(self, dim: int, out_dim: int, rng: Rng, dtype=np.float64):
        self.norm = LayerNorm(4 * dim, dtype=dtype)
        self.reduction = Linear(4 * dim, out_dim, rng, bias=False, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        h, w, d = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"patch merging needs even sizes, got {h}x{w}")
        # Concatenation order per cell: (0, 0), (1, 0), (0, 1), (1, 1).
        x = x.reshape(h // 2, 2, w // 2, 2, d).transpose(0, 2, 3, 1, 4)
        return self.reduction(self.norm(x.reshape(h // 2, w // 2, 4 * d)))


class MultiScaleBackbone(Module):
    """Hierarchical window-attention backbone producing a feature pyramid.

    A patch embedding with the first stride feeds the first level; each
    following level is a patch merging of the previous one. Every level runs
    ``ms_depth`` window blocks.
    """

    def __init__(self, config: VisionConfig, rng: Rng, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        dims = config.ms_dims
        self.stem = PatchEmbed(config.hr_resolution, config.ms_strides[0], dims[0], rng.child(0), dtype)
        self.merges = [
            PatchMerging(dims[i], dims[i + 1], rng.child(1).child(i), dtype)
            for i in range(len(dims) - 1)
        ]
        self.stages = [
            [
                WindowBlock(dim, config.ms_heads, config.window, r, dtype)
                for r in rng.child(2).child(i).split(config.ms_depth)
            ]
            for i, dim in enumerate(dims)
        ]

    def named_parameters(self, prefix: str = ""):
        yield from self.stem.named_parameters(f"{prefix}stem.")
        for i, merge in enumerate(self.merges):
            yield from merge.named_parameters(f"{prefix}merges.{i}.")
        for i, stage in enumerate(self.stages):
            for j, block in enumerate(stage):
                yield from block.named_parameters(f"{prefix}stages.{i}.{j}.")

    def encode(self, image: Tensor) -> MultiScaleFeatures:
        grid = self.stem.grid
        x = self.stem(image).reshape(grid, grid, -1)
        levels = []
        for i, stage in enumerate(self.stages):
            if i > 0:
                x = self.merges[i - 1](x)
            for block in stage:
                x = block(x)
            levels.append(x)
        return MultiScaleFeatures(levels, tuple(self.config.ms_strides))

    def forward(self, image: Union[ImageRaster, Tensor]) -> MultiScaleFeatures:
        if isinstance(image, ImageRaster):
            image = image.to_tensor(self.dtype)
        return self.encode(image)
