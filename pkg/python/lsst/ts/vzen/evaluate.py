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

"""Next-action accuracy and grounding F1."""

__all__ = [
    "METRICS_KEYS",
    "Metrics",
    "grounding_counts",
    "f1_score",
    "evaluate",
    "parameter_digest",
    "write_metrics",
]

import concurrent.futures
import dataclasses
import hashlib
import json
import pathlib
from typing import List, Optional, Sequence, Tuple, Union

from .errors import ContractError
from .grounding import iou
from .nn import Module
from .records import GuideSample
from .scene import normalize_action

METRICS_KEYS = ("next_action_accuracy", "grounding_f1", "mean_iou", "steps")


@dataclasses.dataclass
class Metrics:
    """Evaluation results.

    Only the first four fields are written to the metrics file; the loss
    curve and the raw counts are kept for reports.
    """

    next_action_accuracy: float
    grounding_f1: float
    mean_iou: float
    steps: int = 0
    loss_curve: List[float] = dataclasses.field(default_factory=list)
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0

    def to_json(self) -> dict:
        return {
            "next_action_accuracy": float(self.next_action_accuracy),
            "grounding_f1": float(self.grounding_f1),
            "mean_iou": float(self.mean_iou),
            "steps": int(self.steps),
        }


def grounding_counts(
    ious: Sequence[Optional[float]], iou_threshold: float = 0.5
) -> Tuple[int, int, int]:
    """Count true positives, false positives and false negatives.

    There is one target per record. A prediction with IoU at or above the
    threshold is a true positive; a worse one is a false positive and also
    leaves the target missed. A record without a predicted box (None) only
    misses its target.
    """
    tp = fp = fn = 0
    for value in ious:
        if value is None:
            fn += 1
        elif value >= iou_threshold:
            tp += 1
        else:
            fp += 1
            fn += 1
    return tp, fp, fn


def f1_score(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 0.0 if denominator == 0 else 2 * tp / denominator


def evaluate(
    policy,
    dataset: Sequence[GuideSample],
    iou_threshold: float = 0.5,
    workers: int = 1,
    steps: int = 0,
) -> Metrics:
    """Evaluate a policy on a dataset.

    Parameters
    ----------
    policy : `VZenModel` or any object with ``predict(record, image)``
        Returns a `Prediction` for one record. The model never changes
        during evaluation, so predictions may run in parallel threads.
    dataset : `list` [`GuideSample`]
        Evaluation samples.
    iou_threshold : `float`, optional
        Minimum IoU of a correct box.
    workers : `int`, optional
        Prediction threads; results are reduced in dataset order.
    steps : `int`, optional
        Training steps behind the policy, copied into the result.

    Raises
    ------
    ContractError
        If ``dataset`` is empty.
    """
    if not dataset:
        raise ContractError("evaluate needs a nonempty dataset")
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        predictions = list(pool.map(lambda s: policy.predict(s.record, s.image), dataset))
    correct = 0
    ious: List[Optional[float]] = []
    for sample, prediction in zip(dataset, predictions):
        if normalize_action(prediction.action) == normalize_action(sample.record.next_action):
            correct += 1
        ious.append(None if prediction.bbox is None else iou(prediction.bbox, sample.record.bbox))
    tp, fp, fn = grounding_counts(ious, iou_threshold)
    count = len(dataset)
    return Metrics(
        next_action_accuracy=correct / count,
        grounding_f1=f1_score(tp, fp, fn),
        mean_iou=sum(0.0 if v is None else v for v in ious) / count,
        steps=steps,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
    )


def parameter_digest(model: Module) -> str:
    """Hex sha256 over parameter names, shapes, dtypes and values."""
    digest = hashlib.sha256()
    for name, param in model.named_parameters():
        digest.update(name.encode("utf-8"))
        digest.update(repr((param.shape, str(param.dtype))).encode("utf-8"))
        digest.update(param.data.tobytes())
    return digest.hexdigest()


def write_metrics(metrics: Metrics, path: Union[str, pathlib.Path]) -> None:
    """Write the metrics file with sorted keys, so equal results give equal
    bytes.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(metrics.to_json(), sort_keys=True, indent=2))
        f.write("\n")
