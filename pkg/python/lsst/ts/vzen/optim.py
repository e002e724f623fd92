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

"""Adam optimizer with bias correction."""

__all__ = ["AdamState", "adam_step", "Adam", "clip_grad_norm"]

import dataclasses
import math
from typing import List, Optional, Sequence

import numpy as np

from .errors import NumericError, ShapeError
from .tensor import Tensor


@dataclasses.dataclass
class AdamState:
    """Optimizer state.

    The moment arrays are created on the first step with the shapes of the
    parameters.
    """

    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: List[np.ndarray] = dataclasses.field(default_factory=list)
    second_moment: List[np.ndarray] = dataclasses.field(default_factory=list)


def adam_step(
    params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState
) -> None:
    """Apply one Adam update in place.

    A missing gradient is treated as zero.

    Raises
    ------
    NumericError
        If any gradient is not finite; no parameter is changed.
    ShapeError
        If a gradient or moment does not match its parameter.
    """
    if len(params) != len(grads):
        raise ShapeError(f"adam_step: {len(params)} parameters but {len(grads)} gradients")
    grads = [np.zeros_like(p.data) if g is None else g for p, g in zip(params, grads)]
    for i, (param, grad) in enumerate(zip(params, grads)):
        if grad.shape != param.shape:
            raise ShapeError(f"adam_step: gradient {i} has shape {grad.shape}, expected {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"adam_step: non-finite gradient for parameter {i}; step refused")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
    for param, moment in zip(params, state.first_moment):
        if moment.shape != param.shape:
            raise ShapeError(f"adam_step: moment shape {moment.shape} != parameter {param.shape}")

    state.step_count += 1
    correction1 = 1.0 - state.beta1**state.step_count
    correction2 = 1.0 - state.beta2**state.step_count
    for param, grad, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(
            param.dtype, copy=False
        )


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``.

    Returns
    -------
    norm : `float`
        Global norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


class Adam:
    """Adam over a fixed list of parameters, reading their ``grad``.

    Parameters
    ----------
    params : `list` [`Tensor`]
        Trainable tensors.
    learning_rate : `float`, optional
        Step size; 1e-5 by default.
    """

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 1e-5, **kwargs):
        self.params = list(params)
        self.state = AdamState(learning_rate=learning_rate, **kwargs)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
