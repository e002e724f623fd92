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

"""Binary model checkpoints.

Layout, all integers little-endian:

* magic ``b"VZTK"``
* u32 format version
* u32 length, then the UTF-8 JSON of the model configuration and seed
* u32 parameter count, then for each parameter: u32 name length, UTF-8
  name, u32 rank, one u64 per dimension and the values as little-endian
  32-bit floats in C order.

The parameter count bounds the read, so bytes after the last parameter
and a parameter list cut short are both reported as corruption rather
than silently ignored.
"""

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
]

import json
import logging
import pathlib
import struct
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .config import ModelConfig
from .errors import CheckpointFormatError, CheckpointIntegrityError, ConfigError, ShapeError
from .model import VZenModel

CHECKPOINT_MAGIC = b"VZTK"
CHECKPOINT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_VALUE_DTYPE = np.dtype("<f4")


def save_checkpoint(model: VZenModel, path: Union[str, pathlib.Path]) -> None:
    """Write ``model`` to ``path``.

    Values are stored as 32-bit floats, so a float64 model loses
    precision; a float32 model round-trips exactly.
    """
    header = json.dumps(
        {"model": model.config.to_dict(), "seed": model.seed}, sort_keys=True
    ).encode("utf-8")
    params = list(model.named_parameters())
    chunks = [CHECKPOINT_MAGIC, _U32.pack(CHECKPOINT_VERSION), _U32.pack(len(header)), header]
    chunks.append(_U32.pack(len(params)))
    for name, param in params:
        encoded = name.encode("utf-8")
        chunks += [_U32.pack(len(encoded)), encoded, _U32.pack(param.ndim)]
        chunks += [_U64.pack(dim) for dim in param.shape]
        chunks.append(np.ascontiguousarray(param.data, dtype=_VALUE_DTYPE).tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))
    model.log.info(f"Saved {len(params)} parameters to {path}")


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise CheckpointIntegrityError(
                f"checkpoint truncated reading {what} at byte {self.offset}"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(_U32.size, what))[0]

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(_U64.size, what))[0]


def _read_header(cursor: _Cursor) -> Tuple[ModelConfig, int]:
    if cursor.take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("not a checkpoint: bad magic bytes")
    version = cursor.u32("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint version {version}; expected {CHECKPOINT_VERSION}"
        )
    text = cursor.take(cursor.u32("config length"), "config")
    try:
        header = json.loads(text.decode("utf-8"))
        config = ModelConfig.from_dict(header["model"])
        seed = int(header["seed"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError, ConfigError) as e:
        raise CheckpointFormatError(f"cannot read checkpoint config: {e}") from e
    return config, seed


def load_checkpoint(
    path: Union[str, pathlib.Path], log: Optional[logging.Logger] = None
) -> VZenModel:
    """Read a model written by `save_checkpoint`.

    Raises
    ------
    CheckpointFormatError
        If the magic bytes, version or configuration are not recognized.
    CheckpointIntegrityError
        If the file is truncated, has trailing bytes or its parameters do
        not match the configured model.
    """
    with open(path, "rb") as f:
        cursor = _Cursor(f.read())
    config, seed = _read_header(cursor)
    state: Dict[str, np.ndarray] = {}
    for _ in range(cursor.u32("parameter count")):
        name = cursor.take(cursor.u32("name length"), "name").decode("utf-8", errors="replace")
        shape = tuple(cursor.u64(f"{name} shape") for _ in range(cursor.u32(f"{name} rank")))
        count = int(np.prod(shape, dtype=np.int64))
        raw = cursor.take(count * _VALUE_DTYPE.itemsize, f"{name} values")
        state[name] = np.frombuffer(raw, dtype=_VALUE_DTYPE).reshape(shape)
    if cursor.offset != len(cursor.data):
        raise CheckpointIntegrityError(
            f"{len(cursor.data) - cursor.offset} unexpected bytes after the last parameter"
        )
    model = VZenModel(config, seed=seed, log=log)
    try:
        model.load_state_dict(state)
    except (KeyError, ShapeError) as e:
        raise CheckpointIntegrityError(f"checkpoint does not match its config: {e}") from e
    model.log.info(f"Loaded {len(state)} parameters from {path}")
    return model
