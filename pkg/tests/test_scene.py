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

import unittest

import numpy as np
import numpy.testing

from lsst.ts.vzen.errors import SceneValidationError
from lsst.ts.vzen.font import ADVANCE, GLYPH_HEIGHT, draw_text, glyph, text_width
from lsst.ts.vzen.rng import Rng
from lsst.ts.vzen.scene import (
    ACTION_TEMPLATES,
    DIFFICULTIES,
    SMALL_TARGET_AREA,
    SyntheticScene,
    Widget,
    normalize_action,
    parse_action,
    render_scene,
    synth_pretrain_record,
    synth_record,
    synth_scene,
)


class FontTestCase(unittest.TestCase):
    def test_text_width(self):
        self.assertEqual(text_width(""), 0)
        self.assertEqual(text_width("A"), ADVANCE - 1)
        self.assertEqual(text_width("ABC"), 3 * ADVANCE - 1)

    def test_case_insensitive(self):
        numpy.testing.assert_array_equal(glyph("a"), glyph("A"))

    def test_draw_text_clips(self):
        canvas = np.zeros((10, 10, 3))
        draw_text(canvas, "HELLO", 6, 5, (1.0, 0.0, 0.0))
        self.assertTrue(canvas[:, :, 0].any())
        self.assertFalse(canvas[:5, :, 0].any())
        self.assertFalse(canvas[:, :, 1:].any())
        self.assertLessEqual(int(np.nonzero(canvas[:, :, 0])[0].max()), 5 + GLYPH_HEIGHT - 1)


class ActionTestCase(unittest.TestCase):
    def test_parse(self):
        parsed = parse_action("click( Send )")
        self.assertEqual((parsed.verb, parsed.label, parsed.argument), ("CLICK", "Send", None))
        parsed = parse_action("TYPE(Subject, q3 plan)")
        self.assertEqual((parsed.verb, parsed.argument), ("TYPE", "q3 plan"))

    def test_parse_rejects(self):
        for text in ("CLICK Send", "JUMP(Send)", "TYPE(Subject)", "CLICK(Send, x)", ""):
            with self.subTest(text=text):
                self.assertIsNone(parse_action(text))

    def test_normalize(self):
        self.assertEqual(normalize_action(" CLICK ( Send  Now ) "), "click(send now)")
        self.assertEqual(
            normalize_action("TYPE(Subject , hello)"), normalize_action("type(subject,hello)")
        )


class SceneTestCase(unittest.TestCase):
    def test_validate(self):
        ok = Widget("button", 10, 10, 20, 10, "Go", (0.5, 0.5, 0.5))
        SyntheticScene((ok,), 64).validate()
        outside = Widget("button", 60, 10, 20, 10, "Go", (0.5, 0.5, 0.5))
        for scene in (
            SyntheticScene((outside,), 64),
            SyntheticScene((ok,), 64, platform="nowhere"),
            SyntheticScene((ok,), 64, target_index=1),
            SyntheticScene((Widget("slider", 0, 0, 5, 5, "x", (0, 0, 0)),), 64),
        ):
            with self.assertRaises(SceneValidationError):
                render_scene(scene)

    def test_widget_bbox(self):
        box = Widget("button", 40, 20, 40, 20, "Go", (0, 0, 0)).bbox(160)
        self.assertEqual((box.cx, box.cy, box.w, box.h), (0.375, 0.1875, 0.25, 0.125))

    def test_overlaps(self):
        a = Widget("button", 0, 0, 10, 10, "a", (0, 0, 0))
        b = Widget("button", 12, 0, 10, 10, "b", (0, 0, 0))
        self.assertFalse(a.overlaps(b))
        self.assertTrue(a.overlaps(b, gap=3))

    def test_render(self):
        scene = SyntheticScene(
            (Widget("button", 10, 10, 40, 20, "Go", (0.2, 0.4, 0.8)),), 64, platform="gmail"
        )
        image = render_scene(scene)
        self.assertEqual(image.values.shape, (64, 64, 3))
        numpy.testing.assert_allclose(image.values[0, 0], scene.background)
        numpy.testing.assert_allclose(image.values[15, 14], (0.2, 0.4, 0.8))

    def test_highlight_frame(self):
        widget = Widget("button", 10, 10, 40, 20, "Go", (0.2, 0.4, 0.8))
        plain = render_scene(SyntheticScene((widget,), 64))
        framed = render_scene(SyntheticScene((widget,), 64, highlight=True))
        self.assertFalse(np.array_equal(plain.values, framed.values))
        numpy.testing.assert_array_equal(plain.values[10:30, 10:50], framed.values[10:30, 10:50])


class SynthesisTestCase(unittest.TestCase):
    def test_deterministic(self):
        a, scene_a = synth_record(Rng(3, (1,)), "cluttered")
        b, scene_b = synth_record(Rng(3, (1,)), "cluttered")
        self.assertEqual(a, b)
        numpy.testing.assert_array_equal(render_scene(scene_a).values, render_scene(scene_b).values)

    def test_scene_invariants(self):
        for difficulty in DIFFICULTIES:
            for i in range(10):
                scene, template, text = synth_scene(Rng(i, (7,)), difficulty)
                scene.validate()
                self.assertTrue(template.compatible(scene.target.kind))
                self.assertEqual(text is not None, template.verb == "TYPE")
                labels = [w.label for w in scene.widgets]
                self.assertEqual(len(labels), len(set(labels)))
                for j, w in enumerate(scene.widgets):
                    for other in scene.widgets[j + 1 :]:
                        self.assertFalse(w.overlaps(other))
                if difficulty == "small-target":
                    self.assertLess(scene.target.area, SMALL_TARGET_AREA * 160 * 160)

    def test_record_matches_scene(self):
        for i in range(10):
            record, scene = synth_record(Rng(i, (2,)), "easy", image_ref="x.png")
            parsed = parse_action(record.next_action)
            self.assertIsNotNone(parsed)
            self.assertEqual(parsed.label, scene.target.label)
            self.assertIn(parsed.verb, ACTION_TEMPLATES)
            self.assertEqual(record.bbox, scene.target.bbox(scene.canvas))
            self.assertEqual(record.platform, scene.platform)
            self.assertEqual(record.image_ref, "x.png")
            if not record.last_action:
                self.assertEqual(record.history, ())

    def test_unknown_difficulty(self):
        with self.assertRaises(ValueError):
            synth_scene(Rng(0), "impossible")

    def test_pretrain_records(self):
        record, scene = synth_pretrain_record(Rng(1), "ocr")
        self.assertTrue(scene.highlight)
        self.assertEqual(record.next_action, f"READ({scene.target.label})")
        record, scene = synth_pretrain_record(Rng(1), "grounding")
        self.assertFalse(scene.highlight)
        self.assertEqual(parse_action(record.next_action).verb, "LOCATE")
        with self.assertRaises(ValueError):
            synth_pretrain_record(Rng(1), "captioning")


if __name__ == "__main__":
    unittest.main()
