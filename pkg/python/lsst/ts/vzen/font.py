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

"""5x7 bitmap font for rendering widget labels.

Each glyph is seven rows of five bits, most significant bit on the left.
Lower case letters render as upper case; characters without a glyph render
as an outlined box.
"""

__all__ = ["GLYPH_WIDTH", "GLYPH_HEIGHT", "ADVANCE", "GLYPHS", "glyph", "text_width", "draw_text"]

from typing import Sequence

import numpy as np

GLYPH_WIDTH = 5
GLYPH_HEIGHT = 7
ADVANCE = GLYPH_WIDTH + 1
"""Horizontal pixels per character, including one column of spacing.
"""

_ROWS = {
    "A": "0E 11 11 1F 11 11 11",
    "B": "1E 11 11 1E 11 11 1E",
    "C": "0E 11 10 10 10 11 0E",
    "D": "1E 11 11 11 11 11 1E",
    "E": "1F 10 10 1E 10 10 1F",
    "F": "1F 10 10 1E 10 10 10",
    "G": "0E 11 10 17 11 11 0F",
    "H": "11 11 11 1F 11 11 11",
    "I": "0E 04 04 04 04 04 0E",
    "J": "07 02 02 02 02 12 0C",
    "K": "11 12 14 18 14 12 11",
    "L": "10 10 10 10 10 10 1F",
    "M": "11 1B 15 15 11 11 11",
    "N": "11 11 19 15 13 11 11",
    "O": "0E 11 11 11 11 11 0E",
    "P": "1E 11 11 1E 10 10 10",
    "Q": "0E 11 11 11 15 12 0D",
    "R": "1E 11 11 1E 14 12 11",
    "S": "0F 10 10 0E 01 01 1E",
    "T": "1F 04 04 04 04 04 04",
    "U": "11 11 11 11 11 11 0E",
    "V": "11 11 11 11 11 0A 04",
    "W": "11 11 11 15 15 15 0A",
    "X": "11 11 0A 04 0A 11 11",
    "Y": "11 11 0A 04 04 04 04",
    "Z": "1F 01 02 04 08 10 1F",
    "0": "0E 11 13 15 19 11 0E",
    "1": "04 0C 04 04 04 04 0E",
    "2": "0E 11 01 02 04 08 1F",
    "3": "1F 02 04 02 01 11 0E",
    "4": "02 06 0A 12 1F 02 02",
    "5": "1F 10 1E 01 01 11 0E",
    "6": "06 08 10 1E 11 11 0E",
    "7": "1F 01 02 04 08 08 08",
    "8": "0E 11 11 0E 11 11 0E",
    "9": "0E 11 11 0F 01 02 0C",
    " ": "00 00 00 00 00 00 00",
    ".": "00 00 00 00 00 0C 0C",
    ",": "00 00 00 00 0C 04 08",
    "-": "00 00 00 1F 00 00 00",
    "_": "00 00 00 00 00 00 1F",
    ":": "00 0C 0C 00 0C 0C 00",
    "!": "04 04 04 04 04 00 04",
    "?": "0E 11 01 02 04 00 04",
    "/": "00 01 02 04 08 10 00",
    "'": "0C 04 08 00 00 00 00",
    "@": "0E 11 17 15 17 10 0F",
    "+": "00 04 04 1F 04 04 00",
    "&": "0C 12 14 08 15 12 0D",
    "(": "02 04 08 08 08 04 02",
    ")": "08 04 02 02 02 04 08",
}
_MISSING = "1F 11 11 11 11 11 1F"


def _bitmap(rows: str) -> np.ndarray:
    values = [int(row, 16) for row in rows.split()]
    return np.array(
        [[(value >> (GLYPH_WIDTH - 1 - col)) & 1 for col in range(GLYPH_WIDTH)] for value in values],
        dtype=bool,
    )


GLYPHS = {char: _bitmap(rows) for char, rows in _ROWS.items()}
"""Boolean [7, 5] bitmap per supported character.
"""

_MISSING_GLYPH = _bitmap(_MISSING)


def glyph(char: str) -> np.ndarray:
    return GLYPHS.get(char.upper(), _MISSING_GLYPH)


def text_width(text: str) -> int:
    """Width in pixels of ``text``, without trailing spacing."""
    return max(ADVANCE * len(text) - 1, 0)


def draw_text(canvas: np.ndarray, text: str, x: int, y: int, color: Sequence[float]) -> None:
    """Draw ``text`` into ``canvas`` ([H, W, 3]) with its top left corner at
    (x, y). Pixels outside the canvas are skipped.
    """
    height, width = canvas.shape[:2]
    color = np.asarray(color, dtype=canvas.dtype)
    for i, char in enumerate(text):
        bits = glyph(char)
        left = x + i * ADVANCE
        rows, cols = np.nonzero(bits)
        rows, cols = rows + y, cols + left
        inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        canvas[rows[inside], cols[inside]] = color
