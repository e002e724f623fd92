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

"""Ablation suite: train and evaluate cumulative model variants."""

__all__ = ["ABLATION_ROWS", "row_flags", "AblationResult", "AblationTable", "run_ablation"]

import dataclasses
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .config import VZenConfig
from .dataset import small_target_subset, synthesize_samples
from .errors import ConfigError
from .evaluate import Metrics, evaluate
from .model import VZenModel
from .records import GuideSample
from .trainer import sft_stage

# Each row adds its change to all rows before it.
ABLATION_ROWS: Tuple[Tuple[str, Dict[str, Any]], ...] = (
    (
        "base",
        dict(use_hrcvm=False, use_grounding_head=False, use_mpa=False, backbone_variant="standard"),
    ),
    ("hrcvm", dict(use_hrcvm=True)),
    ("grounding", dict(use_grounding_head=True)),
    ("projection", dict(use_mpa=True)),
    ("gated", dict(backbone_variant="gated")),
)


def row_flags(row: str) -> Dict[str, Any]:
    """Ablation flags of ``row``.

    Raises
    ------
    ConfigError
        If ``row`` is not a known row.
    """
    flags: Dict[str, Any] = {}
    for name, change in ABLATION_ROWS:
        flags.update(change)
        if name == row:
            return flags
    known = [name for name, _ in ABLATION_ROWS]
    raise ConfigError(f"unknown ablation row {row!r}; expected one of {known}")


@dataclasses.dataclass(frozen=True)
class AblationResult:
    row: str
    seed: int
    flags: Dict[str, Any]
    metrics: Metrics


@dataclasses.dataclass
class AblationTable:
    """Results in row order, then seed order."""

    results: List[AblationResult] = dataclasses.field(default_factory=list)

    def for_row(self, row: str) -> List[AblationResult]:
        return [r for r in self.results if r.row == row]

    def to_json(self) -> List[Dict[str, Any]]:
        return [
            dict(row=r.row, seed=r.seed, flags=r.flags, metrics=r.metrics.to_json())
            for r in self.results
        ]

    def format_table(self) -> str:
        lines = [f"{'row':<12} {'seed':>4} {'accuracy':>9} {'F1@0.5':>8} {'mIoU':>7}"]
        for r in self.results:
            m = r.metrics
            lines.append(
                f"{r.row:<12} {r.seed:>4} {m.next_action_accuracy:>9.3f} "
                f"{m.grounding_f1:>8.3f} {m.mean_iou:>7.3f}"
            )
        return "\n".join(lines)


def run_ablation(
    config: VZenConfig,
    train_samples: Optional[Sequence[GuideSample]] = None,
    eval_samples: Optional[Sequence[GuideSample]] = None,
    log: Optional[logging.Logger] = None,
) -> AblationTable:
    """Fine-tune and evaluate every requested row for every seed.

    All variants share the training and evaluation samples. The seed sets
    both the model initialization and the training order.

    Parameters
    ----------
    config : `VZenConfig`
        Model sizes, training hyperparameters, data and ablation settings;
        the ablation flags of ``config`` itself are ignored.
    train_samples, eval_samples : `list` [`GuideSample`], optional
        Generated from ``config.data`` if not given. With
        ``small_target_eval`` the generated evaluation set uses small
        targets and any given set is reduced to its small-target subset.
    log : `logging.Logger`, optional
        Logger.

    Raises
    ------
    ConfigError
        If a row is unknown.
    ContractError
        If a sample set is empty.
    """
    log = log if log is not None else logging.getLogger("run_ablation")
    rows = [(row, row_flags(row)) for row in config.ablation.rows]
    data = config.data
    if train_samples is None:
        train_samples = synthesize_samples(
            data.seed, data.count, data.difficulty, data.canvas, "train", data.workers
        )
    if eval_samples is None:
        difficulty = "small-target" if config.ablation.small_target_eval else data.difficulty
        eval_samples = synthesize_samples(
            data.seed, data.eval_count, difficulty, data.canvas, "eval", data.workers
        )
    if config.ablation.small_target_eval:
        eval_samples = small_target_subset(eval_samples)

    table = AblationTable()
    for row, flags in rows:
        for seed in config.ablation.seeds:
            model = VZenModel(dataclasses.replace(config.model, **flags), seed=seed, log=log)
            train = dataclasses.replace(config.train, stage="sft", seed=seed, **flags)
            curve: List[float] = []
            sft_stage(model, train_samples, train, lambda t: curve.append(t.loss), log=log)
            metrics = evaluate(model, eval_samples, workers=data.workers, steps=train.max_steps)
            metrics.loss_curve = curve
            log.info(
                f"Ablation {row} seed={seed}: accuracy={metrics.next_action_accuracy:.3f} "
                f"F1={metrics.grounding_f1:.3f} mIoU={metrics.mean_iou:.3f}"
            )
            table.results.append(AblationResult(row, seed, flags, metrics))
    return table
