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

"""GUIDE-schema records and their JSON lines persistence.

Each line of a dataset file is one JSON object with exactly the fields
``image``, ``task``, ``history``, ``last_action``, ``next_action``,
``bbox`` (an object with ``cx``, ``cy``, ``w``, ``h``) and ``platform``.
``image`` is the path of an 8-bit RGB PNG relative to the dataset file.
"""

__all__ = [
    "MAX_HISTORY",
    "FLOAT_DECIMALS",
    "RECORD_FIELDS",
    "GuideRecord",
    "GuideSample",
    "write_jsonl",
    "read_jsonl",
    "load_dataset",
]

import dataclasses
import json
import pathlib
from typing import Any, Dict, Iterable, List, Tuple, Union

from .errors import BoxError, RecordParseError, RecordValidationError
from .grounding import BBox
from .vision import ImageRaster

MAX_HISTORY = 32
"""History must be shorter than this.
"""

FLOAT_DECIMALS = 6
"""Box values are written rounded to this many decimals.
"""

RECORD_FIELDS = ("image", "task", "history", "last_action", "next_action", "bbox", "platform")
_BOX_FIELDS = ("cx", "cy", "w", "h")


@dataclasses.dataclass(frozen=True)
class GuideRecord:
    """One dataset row.

    Raises
    ------
    RecordValidationError
        If a field violates the record invariants.
    """

    image_ref: str
    task: str
    history: Tuple[str, ...]
    last_action: str
    next_action: str
    bbox: BBox
    platform: str

    def __post_init__(self):
        object.__setattr__(self, "history", tuple(self.history))
        for name in ("image_ref", "task", "last_action", "next_action", "platform"):
            if not isinstance(getattr(self, name), str):
                raise RecordValidationError(name, "must be a string")
        if not all(isinstance(item, str) for item in self.history):
            raise RecordValidationError("history", "entries must be strings")
        if not self.next_action.strip():
            raise RecordValidationError("next_action", "must not be empty")
        if len(self.history) >= MAX_HISTORY:
            raise RecordValidationError(
                "history", f"{len(self.history)} entries; must be fewer than {MAX_HISTORY}"
            )
        if not isinstance(self.bbox, BBox):
            raise RecordValidationError("bbox", "must be a BBox")

    def to_json(self) -> Dict[str, Any]:
        return {
            "image": self.image_ref,
            "task": self.task,
            "history": list(self.history),
            "last_action": self.last_action,
            "next_action": self.next_action,
            "bbox": {
                name: round(float(getattr(self.bbox, name)), FLOAT_DECIMALS) for name in _BOX_FIELDS
            },
            "platform": self.platform,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "GuideRecord":
        """Build a record from a decoded JSON object.

        Raises
        ------
        RecordValidationError
            If a field is missing, unexpected, of the wrong type or invalid.
        """
        if not isinstance(data, dict):
            raise RecordValidationError("<record>", "must be a JSON object")
        for name in RECORD_FIELDS:
            if name not in data:
                raise RecordValidationError(name, "missing")
        extra = sorted(set(data) - set(RECORD_FIELDS))
        if extra:
            raise RecordValidationError(extra[0], "unexpected field")
        if not isinstance(data["history"], list):
            raise RecordValidationError("history", "must be a list")
        box = data["bbox"]
        if not isinstance(box, dict) or sorted(box) != sorted(_BOX_FIELDS):
            raise RecordValidationError("bbox", f"must be an object with fields {_BOX_FIELDS}")
        try:
            values = [float(box[name]) for name in _BOX_FIELDS]
        except (TypeError, ValueError) as e:
            raise RecordValidationError("bbox", f"values must be numbers: {e}") from e
        try:
            bbox = BBox(*values)
        except BoxError as e:
            raise RecordValidationError("bbox", str(e)) from e
        return cls(
            image_ref=data["image"],
            task=data["task"],
            history=tuple(data["history"]),
            last_action=data["last_action"],
            next_action=data["next_action"],
            bbox=bbox,
            platform=data["platform"],
        )


@dataclasses.dataclass(frozen=True, eq=False)
class GuideSample:
    """A record with its screen image loaded."""

    record: GuideRecord
    image: ImageRaster


def write_jsonl(records: Iterable[GuideRecord], path: Union[str, pathlib.Path]) -> None:
    """Write one JSON object per line, UTF-8 encoded."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.to_json(), ensure_ascii=False))
            f.write("\n")


def read_jsonl(path: Union[str, pathlib.Path]) -> List[GuideRecord]:
    """Read and validate every record of a dataset file.

    Blank lines are skipped.

    Raises
    ------
    RecordParseError
        If a line is not valid JSON.
    RecordValidationError
        If a record violates an invariant; the error names the field and
        the line.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordParseError(line_number, e.msg) from e
            try:
                records.append(GuideRecord.from_json(data))
            except RecordValidationError as e:
                raise RecordValidationError(e.field, e.message, line_number) from e
    return records


def load_dataset(path: Union[str, pathlib.Path]) -> List[GuideSample]:
    """Read a dataset file and load the screen image of every record.

    Image paths are resolved relative to the directory of ``path``.
    """
    path = pathlib.Path(path)
    return [
        GuideSample(record, ImageRaster.from_png(path.parent / record.image_ref))
        for record in read_jsonl(path)
    ]
