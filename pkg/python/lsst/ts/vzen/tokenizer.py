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

"""Byte-level tokenizer.

Ids 0-255 are the UTF-8 bytes of the text; the special tokens follow.
"""

__all__ = ["SpecialToken", "BASE_VOCAB_SIZE", "tokenize", "detokenize"]

import enum
from typing import Iterable, List


class SpecialToken(enum.IntEnum):
    PAD = 256
    BOS = 257
    EOS = 258
    SEP = 259
    IMG = 260
    ACT_BEGIN = 261
    ACT_END = 262
    RESERVED = 263


BASE_VOCAB_SIZE = 264
"""Number of byte plus special token ids.
"""


def tokenize(text: str) -> List[int]:
    """Return the UTF-8 bytes of ``text`` as token ids."""
    return list(text.encode("utf-8"))


def detokenize(ids: Iterable[int]) -> str:
    """Decode the byte ids in ``ids``, skipping every other id.

    Invalid UTF-8 sequences, which an untrained model can emit, are replaced
    rather than raising.
    """
    return bytes(int(i) for i in ids if 0 <= int(i) < 256).decode("utf-8", errors="replace")
