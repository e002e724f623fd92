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

"""Finite-difference checking of analytic gradients."""

__all__ = ["GRADCHECK_STEP", "numerical_gradient", "relative_error", "gradcheck"]

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError
from .rng import Rng
from .tensor import Tensor, no_grad

GRADCHECK_STEP = 1.0e-5
"""Default central difference step.
"""


def _scalar_output(fn: Callable[..., Tensor], inputs: Sequence[Tensor], weights) -> Tensor:
    out = fn(*inputs)
    if out.size == 1:
        return out.reshape(())
    if weights is None or weights.shape != out.shape:
        raise ContractError(f"gradcheck: no projection weights for output shape {out.shape}")
    return (out * Tensor(weights, dtype=out.dtype)).sum()


def numerical_gradient(
    fn: Callable[[], float], tensor: Tensor, index: tuple, h: float = GRADCHECK_STEP
) -> float:
    """Central difference of ``fn`` with respect to one entry of ``tensor``.

    ``fn`` is evaluated twice with ``tensor.data[index]`` moved by ``+h`` and
    ``-h``; the entry is restored afterwards.
    """
    original = tensor.data[index]
    try:
        tensor.data[index] = original + h
        plus = fn()
        tensor.data[index] = original - h
        minus = fn()
    finally:
        tensor.data[index] = original
    return (plus - minus) / (2.0 * h)


def relative_error(analytic: float, numeric: float, floor: float = 1.0e-4) -> float:
    """Return ``|a - n| / max(|a| + |n|, floor)``.

    The floor keeps gradients that are zero up to round-off from reporting
    large relative errors.
    """
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = GRADCHECK_STEP,
    entries: Optional[int] = None,
    rng: Optional[Rng] = None,
    floor: float = 1.0e-4,
) -> float:
    """Compare analytic and central-difference gradients.

    Parameters
    ----------
    fn : callable
        Called as ``fn(*inputs)``; returns a `Tensor`. A non-scalar output
        is reduced to a scalar by a fixed random projection.
    inputs : `list` [`Tensor`]
        Tensors to differentiate with respect to. Each must require grad
        and should be float64.
    h : `float`, optional
        Central difference step.
    entries : `int`, optional
        Number of entries to check, sampled across all inputs. All entries
        are checked by default.
    rng : `Rng`, optional
        Source of the projection weights and the entry sample.
    floor : `float`, optional
        Lower bound of the relative error denominator.

    Returns
    -------
    max_error : `float`
        Largest relative error over the checked entries.

    Raises
    ------
    ContractError
        If an input does not require grad.
    """
    rng = rng if rng is not None else Rng(0)
    for i, tensor in enumerate(inputs):
        if not tensor.requires_grad:
            raise ContractError(f"gradcheck: input {i} does not require grad")

    with no_grad():
        probe = fn(*inputs)
    weights = None if probe.size == 1 else rng.normal(probe.shape)

    for tensor in inputs:
        tensor.zero_grad()
    _scalar_output(fn, inputs, weights).backward()
    analytic = [
        np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs
    ]
    for tensor in inputs:
        tensor.zero_grad()

    candidates = [
        (i, np.unravel_index(flat, t.shape)) for i, t in enumerate(inputs) for flat in range(t.size)
    ]
    if entries is not None and entries < len(candidates):
        candidates = rng.sample(candidates, entries)

    def evaluate() -> float:
        with no_grad():
            return float(_scalar_output(fn, inputs, weights).data)

    worst = 0.0
    for i, index in candidates:
        numeric = numerical_gradient(evaluate, inputs[i], index, h)
        worst = max(worst, relative_error(float(analytic[i][index]), numeric, floor))
    return worst
