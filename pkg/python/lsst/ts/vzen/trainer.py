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

__all__ = [
    "StepTelemetry",
    "accumulate_gradients",
    "Trainer",
    "pretrain_stage",
    "sft_stage",
]

import asyncio
import dataclasses
import inspect
import logging
import math
from typing import Callable, List, Optional, Sequence

from .batch_source import BatchSource, PretrainBatchSource, SampleBatchSource
from .config import TrainConfig
from .errors import ContractError, NumericError
from .model import LossTerms, VZenModel
from .optim import Adam, clip_grad_norm
from .records import GuideSample


@dataclasses.dataclass(frozen=True)
class StepTelemetry:
    """Per optimizer step telemetry; losses are means over the records."""

    step: int
    loss: float
    text_loss: float
    box_loss: float
    confidence_loss: float
    grad_norm: float


def accumulate_gradients(
    model: VZenModel,
    samples: Sequence[GuideSample],
    config: TrainConfig,
    scale: float,
) -> List[LossTerms]:
    """Add ``scale`` times the gradient of each sample's loss to the
    parameter gradients.

    Each record is back-propagated on its own, so the accumulated gradient
    does not depend on how records are grouped into micro-batches.

    Raises
    ------
    NumericError
        If a loss is not finite.
    """
    terms = []
    for sample in samples:
        loss = model.loss(sample.record, sample.image, config)
        value = loss.total.item()
        if not math.isfinite(value):
            raise NumericError(f"loss is {value} for record {sample.record.image_ref!r}")
        (loss.total * scale).backward()
        terms.append(loss)
    return terms


class Trainer:
    """Training loop.

    Each step reads ``grad_accum_steps`` micro-batches from the source,
    accumulates their gradients, optionally clips the global gradient
    norm and applies one Adam update. Numeric work runs in the default
    executor; only this loop ever writes the parameters.

    Parameters
    ----------
    name : `str`
        Name of the loop, used in log messages.
    model : `VZenModel`
        The model to train in place.
    source : `BatchSource`
        Micro-batch source; its batch size should be ``config.batch_size``.
    config : `TrainConfig`
        Hyperparameters.
    callback_func : `func`, optional
        Called with a `StepTelemetry` after every step; may be a coroutine
        function.
    log : `logging.Logger`, optional
        Parent logger.

    Raises
    ------
    ContractError
        If the ablation flags of ``config`` do not match the model.
    """

    def __init__(
        self,
        name: str,
        model: VZenModel,
        source: BatchSource,
        config: TrainConfig,
        callback_func: Optional[Callable] = None,
        log: Optional[logging.Logger] = None,
    ):
        if log is None:
            self.log = logging.getLogger(type(self).__name__)
        else:
            self.log = log.getChild(type(self).__name__)
        for key, value in config.flags.items():
            if getattr(model.config, key) != value:
                raise ContractError(
                    f"Trainer:{name}: train config has {key}={value!r} "
                    f"but the model was built with {getattr(model.config, key)!r}"
                )
        self.name = name
        self.model = model
        self.config = config
        self._source = source
        self._callback_func = callback_func
        self._enabled = False
        self.optimizer = Adam(model.parameters(), learning_rate=config.learning_rate)
        self.loss_curve: List[float] = []
        self.steps_done = 0
        self.train_loop: Optional[asyncio.Future] = None

    async def start(self):
        """Start the training loop."""
        self.log.debug(f"Trainer:{self.name}: Starting training loop.")
        self._enabled = True
        self.train_loop = asyncio.ensure_future(self._run())

    async def stop(self):
        """Terminate the training loop."""
        self.log.debug(f"Trainer:{self.name}: Stopping training loop.")
        if self.train_loop is not None:
            self.train_loop.cancel()
        await self._source.stop()
        self._enabled = False

    async def run(self) -> List[float]:
        """Train for ``max_steps`` steps and return the loss curve."""
        await self.start()
        try:
            await self.train_loop
        finally:
            await self._source.stop()
            self._enabled = False
        if self.loss_curve:
            self.log.info(
                f"Trainer:{self.name}: {self.steps_done} steps, "
                f"loss {self.loss_curve[0]:.4f} -> {self.loss_curve[-1]:.4f}"
            )
        return self.loss_curve

    async def _run(self):
        if self.config.max_steps == 0:
            return
        await self._source.start()
        loop = asyncio.get_running_loop()
        while self._enabled and self.steps_done < self.config.max_steps:
            batches = []
            for _ in range(self.config.grad_accum_steps):
                await self._source.read()
                batches.append(list(self._source.output))
            telemetry = await loop.run_in_executor(None, self.train_step, batches)
            self.loss_curve.append(telemetry.loss)
            if self.steps_done % self.config.log_interval == 0:
                self.log.info(
                    f"Trainer:{self.name}: step {telemetry.step} loss={telemetry.loss:.5f}"
                )
            if self._callback_func is not None:
                result = self._callback_func(telemetry)
                if inspect.isawaitable(result):
                    await result

    def train_step(self, batches: Sequence[Sequence[GuideSample]]) -> StepTelemetry:
        """Run one optimizer step over the given micro-batches.

        Raises
        ------
        NumericError
            If a loss or gradient is not finite; the parameters are left
            as they were before the step.
        """
        step = self.steps_done
        scale = 1.0 / (self.config.batch_size * self.config.grad_accum_steps)
        terms: List[LossTerms] = []
        try:
            for batch in batches:
                terms += accumulate_gradients(self.model, batch, self.config, scale)
            params = self.optimizer.params
            grad_norm = clip_grad_norm(params, self.config.grad_clip)
            self.optimizer.step()
        except NumericError as e:
            self.optimizer.zero_grad()
            self.log.error(f"Trainer:{self.name}: step {step}: {e}; aborting")
            raise NumericError(f"step {step}: {e}; training aborted") from e
        self.optimizer.zero_grad()
        count = len(terms)
        telemetry = StepTelemetry(
            step=step,
            loss=sum(t.total.item() for t in terms) / count,
            text_loss=sum(t.text for t in terms) / count,
            box_loss=sum(t.box for t in terms) / count,
            confidence_loss=sum(t.confidence for t in terms) / count,
            grad_norm=grad_norm,
        )
        self.steps_done += 1
        self.log.debug(
            f"Trainer:{self.name}: step {step} loss={telemetry.loss:.5f} "
            f"text={telemetry.text_loss:.5f} box={telemetry.box_loss:.5f} "
            f"grad_norm={grad_norm:.4g}"
        )
        return telemetry


def pretrain_stage(
    model: VZenModel,
    config: TrainConfig,
    count: int = 32,
    canvas: int = 160,
    callback_func: Optional[Callable] = None,
    log: Optional[logging.Logger] = None,
) -> VZenModel:
    """Pretrain on generated OCR and pure grounding tasks.

    Parameters
    ----------
    model : `VZenModel`
        Model to train in place.
    config : `TrainConfig`
        Hyperparameters; ``stage`` must be "pretrain".
    count : `int`, optional
        Size of the generated sample pool.
    canvas : `int`, optional
        Screen size of the generated samples.
    callback_func : `func`, optional
        Receives a `StepTelemetry` after every step.
    log : `logging.Logger`, optional
        Parent logger.

    Returns
    -------
    model : `VZenModel`
        The same model.

    Raises
    ------
    ContractError
        If ``config.stage`` is not "pretrain".
    NumericError
        If the loss diverges.
    """
    if config.stage != "pretrain":
        raise ContractError(f"pretrain_stage needs stage='pretrain', got {config.stage!r}")
    source = PretrainBatchSource(
        "pretrain", config.batch_size, seed=config.seed, count=count, canvas=canvas, log=log
    )
    trainer = Trainer("pretrain", model, source, config, callback_func, log)
    asyncio.run(trainer.run())
    return model


def sft_stage(
    model: VZenModel,
    dataset: Sequence[GuideSample],
    config: TrainConfig,
    callback_func: Optional[Callable] = None,
    log: Optional[logging.Logger] = None,
) -> VZenModel:
    """Fine-tune on GUIDE samples with the joint text and box loss.

    Raises
    ------
    ContractError
        If ``config.stage`` is not "sft" or ``dataset`` is empty.
    NumericError
        If the loss diverges.
    """
    if config.stage != "sft":
        raise ContractError(f"sft_stage needs stage='sft', got {config.stage!r}")
    if not dataset:
        raise ContractError("sft_stage needs a nonempty dataset")
    source = SampleBatchSource("sft", dataset, config.batch_size, seed=config.seed, log=log)
    trainer = Trainer("sft", model, source, config, callback_func, log)
    asyncio.run(trainer.run())
    return model
