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

import pathlib
import tempfile
import unittest

import numpy as np
import numpy.testing

from lsst.ts.vzen.config import VisionConfig, small_model_config
from lsst.ts.vzen.errors import ShapeError
from lsst.ts.vzen.rng import Rng
from lsst.ts.vzen.tensor import Tensor
from lsst.ts.vzen.vision import (
    ImageRaster,
    MultiScaleBackbone,
    PatchEmbed,
    PatchMerging,
    VisionEncoder,
    WindowBlock,
    window_partition,
    window_reverse,
)


class ImageRasterTestCase(unittest.TestCase):
    def test_values_are_clamped(self):
        raster = ImageRaster(np.full((4, 4, 3), 2.0))
        self.assertEqual(raster.values.max(), 1.0)
        with self.assertRaises(ShapeError):
            ImageRaster(np.zeros((4, 4)))

    def test_png_round_trip(self):
        values = np.round(Rng(0).uniform(size=(12, 10, 3)) * 255.0) / 255.0
        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / "image.png"
            ImageRaster(values).to_png(path)
            loaded = ImageRaster.from_png(path)
        self.assertEqual((loaded.height, loaded.width), (12, 10))
        numpy.testing.assert_array_equal(loaded.values, values)

    def test_resized(self):
        raster = ImageRaster(np.full((20, 20, 3), 0.25))
        self.assertIs(raster.resized(20), raster)
        small = raster.resized(10)
        self.assertEqual((small.height, small.width), (10, 10))
        numpy.testing.assert_allclose(small.values, 0.25, atol=1e-6)


class PatchEmbedTestCase(unittest.TestCase):
    def test_token_counts(self):
        for resolution, patch, tokens in ((64, 8, 64), (224, 14, 256), (160, 16, 100)):
            with self.subTest(resolution=resolution):
                embed = PatchEmbed(resolution, patch, 4, Rng(0))
                image = Tensor(np.zeros((resolution, resolution, 3)))
                self.assertEqual(embed(image).shape, (tokens, 4))

    def test_non_divisible_resolution(self):
        with self.assertRaises(ShapeError):
            PatchEmbed(30, 8, 4, Rng(0))

    def test_wrong_image_size(self):
        embed = PatchEmbed(16, 8, 4, Rng(0))
        with self.assertRaises(ShapeError):
            embed(Tensor(np.zeros((8, 8, 3))))

    def test_swapping_patches_swaps_rows(self):
        embed = PatchEmbed(16, 8, 6, Rng(1))
        image = Rng(2).uniform(size=(16, 16, 3))
        swapped = image.copy()
        swapped[0:8, 0:8], swapped[8:16, 8:16] = image[8:16, 8:16], image[0:8, 0:8]
        before = embed.embed_patches(Tensor(image)).data
        after = embed.embed_patches(Tensor(swapped)).data
        numpy.testing.assert_allclose(after[[3, 1, 2, 0]], before, rtol=1e-12, atol=1e-15)

    def test_translation_changes_exactly_the_touched_tokens(self):
        embed = PatchEmbed(32, 8, 5, Rng(3))
        image = np.zeros((32, 32, 3))
        image[8:16, 0:8] = 1.0
        moved = np.zeros((32, 32, 3))
        moved[8:16, 8:16] = 1.0
        before = embed.embed_patches(Tensor(image)).data
        after = embed.embed_patches(Tensor(moved)).data
        differing = np.flatnonzero(np.any(before != after, axis=1))
        numpy.testing.assert_array_equal(differing, [4, 5])


class VisionEncoderTestCase(unittest.TestCase):
    def test_low_resolution_shape(self):
        config = VisionConfig()
        encoder = VisionEncoder(64, 8, 48, 2, 4, Rng(0))
        tokens = encoder(ImageRaster(np.zeros((64, 64, 3))))
        self.assertEqual(tokens.values.shape, (config.lr_tokens, config.lr_dim))
        self.assertEqual(tokens.grid, 8)
        with self.assertRaises(ShapeError):
            encoder(ImageRaster(np.zeros((32, 32, 3))))

    def test_high_resolution_shape_and_determinism(self):
        image = ImageRaster(Rng(5).uniform(size=(160, 160, 3)))
        first = VisionEncoder(160, 16, 32, 1, 4, Rng(9))(image)
        second = VisionEncoder(160, 16, 32, 1, 4, Rng(9))(image)
        self.assertEqual(first.values.shape, (100, 32))
        self.assertGreater(first.num_tokens, VisionConfig().lr_tokens)
        numpy.testing.assert_array_equal(first.values.data, second.values.data)

    def test_zeroed_blocks_are_identity(self):
        encoder = VisionEncoder(16, 8, 8, 2, 2, Rng(0))
        for block in encoder.blocks:
            for param in block.parameters():
                param.data[...] = 0
        image = Tensor(Rng(1).uniform(size=(16, 16, 3)))
        numpy.testing.assert_array_equal(
            encoder.encode(image).data, encoder.patch_embed(image).data
        )

    def test_five_times_resolution_config(self):
        config = VisionConfig(lr_resolution=64, hr_resolution=320)
        self.assertEqual(config.hr_resolution / config.lr_resolution, 5)
        self.assertEqual(config.hr_tokens, 400)
        self.assertEqual(config.ms_sizes, (40, 20, 10))


class MultiScaleTestCase(unittest.TestCase):
    def test_window_partition_round_trip(self):
        x = Tensor(np.arange(4 * 6 * 2, dtype=float).reshape(4, 6, 2))
        windows = window_partition(x, 2)
        self.assertEqual(windows.shape, (6, 4, 2))
        numpy.testing.assert_array_equal(window_reverse(windows, 2, 4, 6).data, x.data)

    def test_window_block_is_local(self):
        block = WindowBlock(4, 2, 2, Rng(0))
        x = Rng(1).normal((4, 4, 4))
        changed = x.copy()
        changed[0, 0] += 5.0
        before = block(Tensor(x)).data
        after = block(Tensor(changed)).data
        numpy.testing.assert_array_equal(before[2:], after[2:])
        numpy.testing.assert_array_equal(before[:, 2:], after[:, 2:])

    def test_patch_merging(self):
        merge = PatchMerging(4, 8, Rng(0))
        self.assertEqual(merge(Tensor(np.ones((4, 6, 4)))).shape, (2, 3, 8))
        with self.assertRaises(ShapeError):
            merge(Tensor(np.ones((3, 4, 4))))

    def test_default_pyramid(self):
        config = VisionConfig()
        backbone = MultiScaleBackbone(config, Rng(0))
        features = backbone(ImageRaster(Rng(1).uniform(size=(160, 160, 3))))
        self.assertEqual(features.sizes, [(20, 20), (10, 10), (5, 5)])
        self.assertEqual(features.dims, [16, 32, 64])
        self.assertEqual(features.strides, (8, 16, 32))
        self.assertEqual(features.dims, sorted(features.dims))

    def test_gradient_reaches_image_from_every_level(self):
        config = small_model_config().vision
        backbone = MultiScaleBackbone(config, Rng(0))
        for level in range(3):
            with self.subTest(level=level):
                image = Tensor(Rng(1).uniform(size=(32, 32, 3)), requires_grad=True)
                backbone.encode(image).levels[level].sum().backward()
                self.assertIsNotNone(image.grad)
                self.assertGreater(np.abs(image.grad).sum(), 0.0)

    def test_parameter_names(self):
        backbone = MultiScaleBackbone(small_model_config().vision, Rng(0))
        names = [name for name, _ in backbone.named_parameters()]
        self.assertEqual(names[0], "stem.proj.weight")
        self.assertIn("merges.1.reduction.weight", names)
        self.assertIn("stages.2.0.block.mlp.fc2.bias", names)
        self.assertEqual(len(names), len(set(names)))


if __name__ == "__main__":
    unittest.main()
