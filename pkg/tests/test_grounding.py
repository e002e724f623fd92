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

import math
import unittest

import numpy as np
import numpy.testing

from lsst.ts.vzen.config import small_model_config
from lsst.ts.vzen.errors import BoxError, ShapeError
from lsst.ts.vzen.grounding import (
    COORDINATE_TOKEN_OFFSET,
    BBox,
    GroundingHead,
    box_losses,
    confidence_loss,
    decode_box_buckets,
    encode_box_buckets,
    giou,
    grounding_loss,
    iou,
    sine_position_encoding,
)
from lsst.ts.vzen.rng import Rng
from lsst.ts.vzen.tensor import Tensor
from lsst.ts.vzen.vision import MultiScaleFeatures


class BBoxTestCase(unittest.TestCase):
    def test_invalid_boxes(self):
        for args in (
            (0.5, 0.5, 0.0, 0.2),
            (0.5, 0.5, 1.2, 0.2),
            (0.1, 0.5, 0.4, 0.2),
            (0.5, 0.95, 0.2, 0.2),
            (math.nan, 0.5, 0.2, 0.2),
        ):
            with self.subTest(args=args):
                with self.assertRaises(BoxError):
                    BBox(*args)

    def test_xyxy(self):
        box = BBox.from_xyxy(0.1, 0.2, 0.5, 0.6)
        self.assertAlmostEqual(box.cx, 0.3)
        self.assertAlmostEqual(box.h, 0.4)
        for a, b in zip(box.to_xyxy(), (0.1, 0.2, 0.5, 0.6)):
            self.assertAlmostEqual(a, b)

    def test_clamped_from(self):
        box = BBox.clamped_from(0.95, 0.5, 0.4, 0.0)
        x0, y0, x1, y1 = box.to_xyxy()
        self.assertGreaterEqual(x0, 0.75 - 1e-12)
        self.assertLessEqual(x1, 1.0 + 1e-12)
        self.assertGreater(box.h, 0)

    def test_iou(self):
        a = BBox.from_xyxy(0, 0, 0.5, 0.5)
        b = BBox.from_xyxy(0.25, 0, 0.75, 0.5)
        self.assertAlmostEqual(iou(a, a), 1.0)
        self.assertAlmostEqual(iou(a, b), 1 / 3)
        self.assertEqual(iou(a, BBox.from_xyxy(0.6, 0.6, 0.9, 0.9)), 0.0)

    def test_iou_corner_boxes(self):
        a = BBox.from_xyxy(0, 0, 0.2, 0.2)
        b = BBox.from_xyxy(0.1, 0.1, 0.3, 0.3)
        self.assertAlmostEqual(iou(a, b), 0.01 / 0.07)

    def test_iou_properties(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b = (BBox.clamped_from(*rng.uniform(0.05, 0.95, 4)) for _ in range(2))
            value = iou(a, b)
            self.assertGreaterEqual(value, 0.0)
            self.assertLessEqual(value, 1.0)
            self.assertAlmostEqual(value, iou(b, a), places=12)
            self.assertAlmostEqual(iou(a, a), 1.0, places=12)

    def test_iou_decreases_with_distance(self):
        a = BBox(0.3, 0.5, 0.2, 0.2)
        values = [iou(a, BBox(0.3 + dx, 0.5, 0.2, 0.2)) for dx in np.linspace(0, 0.3, 16)]
        self.assertTrue(all(x >= y for x, y in zip(values, values[1:])))
        self.assertEqual(values[-1], 0.0)

    def test_giou(self):
        a = BBox.from_xyxy(0, 0, 0.5, 0.5)
        far = BBox.from_xyxy(0.5, 0.5, 1.0, 1.0)
        self.assertAlmostEqual(giou(a, a), 1.0)
        # Disjoint corner boxes: hull 1, union 0.5.
        self.assertAlmostEqual(giou(a, far), -0.5)


class BoxLossTestCase(unittest.TestCase):
    def test_zero_at_target(self):
        target = BBox(0.4, 0.5, 0.2, 0.3)
        loss = grounding_loss(Tensor(target.as_array()), target)
        self.assertAlmostEqual(loss.item(), 0.0, places=12)

    def test_terms(self):
        target = BBox.from_xyxy(0, 0, 0.5, 0.5)
        pred = BBox.from_xyxy(0.25, 0, 0.75, 0.5)
        l1, giou_term = box_losses(Tensor(pred.as_array()), target)
        self.assertAlmostEqual(l1.item(), 0.25)
        self.assertAlmostEqual(giou_term.item(), 1 - giou(pred, target))
        loss = grounding_loss(Tensor(pred.as_array()), target, l1_w=5.0, giou_w=2.0)
        self.assertAlmostEqual(loss.item(), 5 * 0.25 + 2 * giou_term.item())

    def test_gradient_points_to_target(self):
        target = BBox(0.5, 0.5, 0.2, 0.2)
        pred = Tensor(np.array([0.6, 0.5, 0.2, 0.2]), requires_grad=True)
        grounding_loss(pred, target).backward()
        self.assertGreater(pred.grad[0], 0)

    def test_shape(self):
        with self.assertRaises(ShapeError):
            box_losses(Tensor(np.zeros(5)), BBox(0.5, 0.5, 0.1, 0.1))


class PositionEncodingTestCase(unittest.TestCase):
    def test_shape_and_range(self):
        enc = sine_position_encoding(3, 5, 8)
        self.assertEqual(enc.shape, (15, 8))
        self.assertLessEqual(np.abs(enc).max(), 1.0)
        # Cells in one row share the row half.
        numpy.testing.assert_array_equal(enc[0, :4], enc[4, :4])
        self.assertFalse(np.array_equal(enc[0, 4:], enc[1, 4:]))

    def test_width(self):
        with self.assertRaises(ShapeError):
            sine_position_encoding(2, 2, 6)


class BucketTestCase(unittest.TestCase):
    def test_encode_decode_covers_box(self):
        box = BBox.from_xyxy(0.1, 0.2, 0.5, 0.6)
        ids = encode_box_buckets(box, 100)
        self.assertEqual(len(ids), 4)
        self.assertTrue(all(COORDINATE_TOKEN_OFFSET <= i < COORDINATE_TOKEN_OFFSET + 100 for i in ids))
        decoded = decode_box_buckets(ids, 100)
        x0, y0, x1, y1 = decoded.to_xyxy()
        self.assertLessEqual(x0, 0.1 + 1e-9)
        self.assertLessEqual(y0, 0.2 + 1e-9)
        self.assertGreaterEqual(x1, 0.5 - 1e-9)
        self.assertGreaterEqual(y1, 0.6 - 1e-9)
        self.assertGreater(iou(decoded, box), 0.9)

    def test_tiny_box_has_positive_size(self):
        box = BBox.from_xyxy(0.501, 0.501, 0.502, 0.502)
        decoded = decode_box_buckets(encode_box_buckets(box, 10), 10)
        self.assertGreater(decoded.area, 0)

    def test_decode_rejects(self):
        o = COORDINATE_TOKEN_OFFSET
        self.assertIsNone(decode_box_buckets([o, o + 1, 65], 100))
        self.assertIsNone(decode_box_buckets([o + 5, o, o + 2, o + 3], 100))
        self.assertIsNotNone(decode_box_buckets([65, o, o, o + 1, o + 1, 66], 100))


class GroundingHeadTestCase(unittest.TestCase):
    def setUp(self):
        self.config = small_model_config()
        self.head = GroundingHead(self.config, Rng(0))

    def pyramid(self, seed=1):
        vision = self.config.vision
        rngs = Rng(seed).split(len(vision.ms_dims))
        levels = [
            Tensor(r.normal((size, size, dim)))
            for r, size, dim in zip(rngs, vision.ms_sizes, vision.ms_dims)
        ]
        return MultiScaleFeatures(levels, tuple(vision.ms_strides))

    def test_output(self):
        query = Tensor(Rng(2).normal(self.config.model_dim))
        out = self.head(query, self.pyramid())
        self.assertEqual(out.box.shape, (4,))
        self.assertTrue(np.all((out.box.data > 0) & (out.box.data < 1)))
        box, confidence = self.head.ground(query, self.pyramid())
        self.assertIsInstance(box, BBox)
        self.assertTrue(0 <= confidence <= 1)
        loss = confidence_loss(out, BBox(0.5, 0.5, 0.2, 0.2))
        self.assertTrue(math.isfinite(loss.item()))

    def test_zeroed_head_gives_centered_box(self):
        self.head.bbox_head.fc2.weight.data[...] = 0.0
        query = Tensor(Rng(2).normal(self.config.model_dim))
        box, confidence = self.head.ground(query, self.pyramid())
        numpy.testing.assert_allclose(box.as_array(), [0.5, 0.5, 0.5, 0.5])
        self.assertEqual(confidence, 0.5)

    def test_depends_on_features(self):
        query = Tensor(Rng(2).normal(self.config.model_dim))
        a = self.head(query, self.pyramid(1)).box.data
        b = self.head(query, self.pyramid(2)).box.data
        self.assertFalse(np.array_equal(a, b))

    def test_pyramid_mismatch(self):
        query = Tensor(np.zeros(self.config.model_dim))
        good = self.pyramid()
        wrong_width = MultiScaleFeatures(good.levels[:-1], good.strides[:-1])
        with self.assertRaises(ShapeError):
            self.head(query, wrong_width)
        levels = list(good.levels)
        levels[0] = Tensor(np.zeros((3, 3, self.config.vision.ms_dims[0])))
        with self.assertRaises(ShapeError):
            self.head(query, MultiScaleFeatures(levels, good.strides))


if __name__ == "__main__":
    unittest.main()
