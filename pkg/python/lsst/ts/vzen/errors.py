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

"""Exceptions raised by the V-Zen package.

Each exception subclasses the closest builtin exception so that callers
may catch either the specific class or the builtin one.
"""

__all__ = [
    "ShapeError",
    "NumericError",
    "ContractError",
    "ConfigError",
    "TruncationError",
    "BoxError",
    "SceneValidationError",
    "RecordValidationError",
    "RecordParseError",
    "GenerationError",
    "CheckpointFormatError",
    "CheckpointIntegrityError",
    "UsageError",
]

from typing import Optional


class ShapeError(ValueError):
    """Tensor or feature dimensions disagree."""


class NumericError(FloatingPointError):
    """A NaN or infinite value was produced or supplied."""


class ContractError(RuntimeError):
    """A call precondition was violated."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class TruncationError(ValueError):
    """A token sequence does not fit in the context window."""


class BoxError(ValueError):
    """A bounding box violates the normalized box invariants."""


class SceneValidationError(ValueError):
    """A synthetic scene is malformed, e.g. a widget is outside the canvas."""


class RecordValidationError(ValueError):
    """A dataset record violates an invariant.

    Parameters
    ----------
    field : `str`
        Name of the offending field.
    message : `str`
        Description of the problem.
    line_number : `int`, optional
        One-based line number, when read from a file.
    """

    def __init__(self, field: str, message: str, line_number: Optional[int] = None):
        self.field = field
        self.message = message
        self.line_number = line_number
        where = "" if line_number is None else f"line {line_number}: "
        super().__init__(f"{where}{field}: {message}")


class RecordParseError(ValueError):
    """A dataset line could not be parsed.

    Parameters
    ----------
    line_number : `int`
        One-based line number of the malformed line.
    message : `str`
        Description of the problem.
    """

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class GenerationError(RuntimeError):
    """Synthetic generation could not satisfy its constraints."""


class CheckpointFormatError(IOError):
    """Checkpoint magic bytes, version or header are not recognized."""


class CheckpointIntegrityError(IOError):
    """Checkpoint payload is truncated or does not match the model."""


class UsageError(Exception):
    """Command line usage error."""
