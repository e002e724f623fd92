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

"""Prompt layout fed to the backbone.

A full sequence is::

    IMG image SEP task SEP history SEP last_action ACT_BEGIN action ACT_END

with the history entries joined by newlines, oldest first. This module
builds the text ids from the first ``SEP`` on; the backbone prepends the
embedded ``IMG`` marker and the projected image tokens. Next-token loss
applies only to the positions that predict the action and the closing
``ACT_END``; when boxes are written as text, the four coordinate tokens
follow the action.
"""

__all__ = ["TrainingExample", "build_prompt_ids"]

import dataclasses
from typing import Optional

import numpy as np

from .functional import IGNORE_INDEX
from .grounding import encode_box_buckets
from .records import GuideRecord
from .tokenizer import SpecialToken, tokenize


@dataclasses.dataclass(frozen=True, eq=False)
class TrainingExample:
    """Token ids of one record.

    Attributes
    ----------
    input_ids : `numpy.ndarray`
        Text ids; the prompt, followed by the target when it was requested.
    labels : `numpy.ndarray`
        Next-token targets, one per entry of ``input_ids``;
        ``IGNORE_INDEX`` outside the supervised span.
    prompt_length : `int`
        Number of prompt ids, up to and including ``ACT_BEGIN``.
    """

    input_ids: np.ndarray
    labels: np.ndarray
    prompt_length: int

    @property
    def prompt_ids(self) -> np.ndarray:
        return self.input_ids[: self.prompt_length]

    def full_labels(self, image_count: int) -> np.ndarray:
        """Labels for a sequence with ``image_count`` image positions first."""
        return np.concatenate([np.full(image_count, IGNORE_INDEX, dtype=np.int64), self.labels])


def build_prompt_ids(
    record: GuideRecord, with_target: bool = True, coordinate_buckets: Optional[int] = None
) -> TrainingExample:
    """Tokenize ``record`` in the fixed prompt layout.

    Parameters
    ----------
    record : `GuideRecord`
        Record to encode.
    with_target : `bool`, optional
        Append ``next_action`` and ``ACT_END`` and supervise them.
    coordinate_buckets : `int`, optional
        If given, the target box is appended to the action as four
        coordinate tokens with this many buckets per axis.
    """
    sep = int(SpecialToken.SEP)
    prompt = (
        [sep]
        + tokenize(record.task)
        + [sep]
        + tokenize("\n".join(record.history))
        + [sep]
        + tokenize(record.last_action)
        + [int(SpecialToken.ACT_BEGIN)]
    )
    target = []
    if with_target:
        target = tokenize(record.next_action)
        if coordinate_buckets is not None:
            target += encode_box_buckets(record.bbox, coordinate_buckets)
        target.append(int(SpecialToken.ACT_END))
    ids = np.array(prompt + target, dtype=np.int64)
    labels = np.full(ids.size, IGNORE_INDEX, dtype=np.int64)
    if target:
        # Position j predicts id j + 1.
        labels[len(prompt) - 1 : -1] = ids[len(prompt) :]
    return TrainingExample(ids, labels, len(prompt))
