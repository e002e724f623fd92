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

import json
import pathlib
import tempfile
import unittest

from lsst.ts.vzen.errors import RecordParseError, RecordValidationError
from lsst.ts.vzen.grounding import BBox
from lsst.ts.vzen.records import MAX_HISTORY, GuideRecord, read_jsonl, write_jsonl


def make_record(**kwargs):
    fields = dict(
        image_ref="images/a.png",
        task="Click the 'Send' button",
        history=("OPEN(Inbox)",),
        last_action="CLICK(Compose)",
        next_action="CLICK(Send)",
        bbox=BBox(0.5, 0.25, 0.1, 0.05),
        platform="gmail",
    )
    fields.update(kwargs)
    return GuideRecord(**fields)


class GuideRecordTestCase(unittest.TestCase):
    def test_json_round_trip(self):
        record = make_record(task="Tippen Sie 'grüße' ein")
        self.assertEqual(GuideRecord.from_json(record.to_json()), record)

    def test_json_fields(self):
        data = make_record().to_json()
        self.assertEqual(
            set(data),
            {"image", "task", "history", "last_action", "next_action", "bbox", "platform"},
        )
        self.assertEqual(data["bbox"], {"cx": 0.5, "cy": 0.25, "w": 0.1, "h": 0.05})

    def test_invariants(self):
        with self.assertRaises(RecordValidationError) as cm:
            make_record(next_action="  ")
        self.assertEqual(cm.exception.field, "next_action")
        with self.assertRaises(RecordValidationError) as cm:
            make_record(history=("x",) * MAX_HISTORY)
        self.assertEqual(cm.exception.field, "history")
        make_record(history=("x",) * (MAX_HISTORY - 1))
        with self.assertRaises(RecordValidationError):
            make_record(task=3)

    def test_from_json_errors(self):
        good = make_record().to_json()
        cases = {
            "platform": {k: v for k, v in good.items() if k != "platform"},
            "extra": dict(good, extra=1),
            "history": dict(good, history="OPEN(Inbox)"),
            "bbox": dict(good, bbox={"cx": 0.5, "cy": 0.5, "w": 0.0, "h": 0.1}),
        }
        for field, data in cases.items():
            with self.subTest(field=field):
                with self.assertRaises(RecordValidationError) as cm:
                    GuideRecord.from_json(data)
                self.assertEqual(cm.exception.field, field)
        with self.assertRaises(RecordValidationError):
            GuideRecord.from_json(dict(good, bbox={"cx": "a", "cy": 0.5, "w": 0.1, "h": 0.1}))


class JsonlTestCase(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = pathlib.Path(self.tmpdir.name) / "data.jsonl"

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_write_read(self):
        records = [make_record(), make_record(next_action="TYPE(Subject, hello)", history=())]
        write_jsonl(records, self.path)
        self.assertEqual(read_jsonl(self.path), records)
        self.assertEqual(len(self.path.read_text(encoding="utf-8").splitlines()), 2)

    def test_blank_lines_skipped(self):
        line = json.dumps(make_record().to_json())
        self.path.write_text(f"{line}\n\n{line}\n", encoding="utf-8")
        self.assertEqual(len(read_jsonl(self.path)), 2)

    def test_parse_error_line(self):
        line = json.dumps(make_record().to_json())
        self.path.write_text(f"{line}\n{{not json\n", encoding="utf-8")
        with self.assertRaises(RecordParseError) as cm:
            read_jsonl(self.path)
        self.assertEqual(cm.exception.line_number, 2)

    def test_validation_error_line(self):
        bad = make_record().to_json()
        bad["next_action"] = ""
        good = json.dumps(make_record().to_json())
        self.path.write_text(f"{good}\n{good}\n{json.dumps(bad)}\n", encoding="utf-8")
        with self.assertRaises(RecordValidationError) as cm:
            read_jsonl(self.path)
        self.assertEqual(cm.exception.line_number, 3)
        self.assertEqual(cm.exception.field, "next_action")
        self.assertIn("line 3", str(cm.exception))


if __name__ == "__main__":
    unittest.main()
