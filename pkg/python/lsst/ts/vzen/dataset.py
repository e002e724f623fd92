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

"""Synthetic dataset generation.

Every record draws from its own random stream, identified by the master
seed, the split and the record index, so records do not depend on the
number of worker threads or on the other records. The train and held-out
splits use disjoint streams.
"""

__all__ = [
    "SPLITS",
    "record_rng",
    "synthesize_samples",
    "pretrain_samples",
    "generate_dataset",
    "small_target_subset",
]

import concurrent.futures
import logging
import pathlib
from typing import List, Optional, Sequence, Union

import numpy as np

from .records import GuideSample, write_jsonl
from .rng import Rng
from .scene import SMALL_TARGET_AREA, render_scene, synth_pretrain_record, synth_record
from .vision import ImageRaster

SPLITS = ("train", "eval", "pretrain")


def record_rng(seed: int, split: str, index: int) -> Rng:
    """Random stream of record ``index`` of ``split``."""
    return Rng(seed, (SPLITS.index(split), index))


def _quantized(raster: ImageRaster) -> ImageRaster:
    # Same pixels as a round trip through an 8-bit PNG.
    return ImageRaster(np.round(raster.values * 255.0) / 255.0)


def _image_ref(split: str, index: int) -> str:
    return f"images/{split}-{index:06d}.png"


def _make_sample(seed: int, split: str, index: int, difficulty: str, canvas: int) -> GuideSample:
    rng = record_rng(seed, split, index)
    record, scene = synth_record(rng, difficulty, canvas, _image_ref(split, index))
    return GuideSample(record, _quantized(render_scene(scene)))


def synthesize_samples(
    seed: int,
    count: int,
    difficulty: str = "easy",
    canvas: int = 160,
    split: str = "train",
    workers: int = 1,
) -> List[GuideSample]:
    """Generate ``count`` samples in memory, in index order."""
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        return list(
            pool.map(lambda i: _make_sample(seed, split, i, difficulty, canvas), range(count))
        )


def pretrain_samples(seed: int, count: int, canvas: int = 160) -> List[GuideSample]:
    """Alternate OCR and pure grounding pretraining samples."""
    samples = []
    for index in range(count):
        rng = record_rng(seed, "pretrain", index)
        task_kind = "ocr" if index % 2 == 0 else "grounding"
        record, scene = synth_pretrain_record(rng, task_kind, canvas)
        samples.append(GuideSample(record, _quantized(render_scene(scene))))
    return samples


def generate_dataset(
    out_dir: Union[str, pathlib.Path],
    seed: int,
    count: int,
    difficulty: str = "easy",
    canvas: int = 160,
    split: str = "train",
    workers: int = 4,
    log: Optional[logging.Logger] = None,
) -> pathlib.Path:
    """Write ``<out_dir>/<split>.jsonl`` and its PNG images.

    Returns
    -------
    path : `pathlib.Path`
        The dataset file.
    """
    log = log if log is not None else logging.getLogger("generate_dataset")
    out_dir = pathlib.Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    def make(index: int):
        sample = _make_sample(seed, split, index, difficulty, canvas)
        sample.image.to_png(out_dir / sample.record.image_ref)
        return sample.record

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        records = list(pool.map(make, range(count)))
    path = out_dir / f"{split}.jsonl"
    write_jsonl(records, path)
    log.info(f"Wrote {count} {difficulty} {split} records to {path}")
    return path


def small_target_subset(
    samples: Sequence[GuideSample], max_area: float = SMALL_TARGET_AREA
) -> List[GuideSample]:
    """Samples whose target covers less than ``max_area`` of the screen."""
    return [s for s in samples if s.record.bbox.area < max_area]
