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

"""Finite-difference checks of every differentiable op and composite
layer, at float64 over several seeds.
"""

__all__ = [
    "GRADCHECK_TOLERANCE",
    "GradcheckCase",
    "GradcheckResult",
    "GRADCHECK_CASES",
    "run_gradcheck_suite",
]

import dataclasses
import logging
import time
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .backbone import BackboneLayer, CrossFusion
from .config import TrainConfig, small_model_config
from .functional import (
    IGNORE_INDEX,
    binary_cross_entropy_with_logits,
    causal_mask,
    cross_entropy,
    gelu,
    layer_norm,
    log_softmax,
    scaled_dot_product_attention,
    softmax,
)
from .gradcheck import gradcheck
from .grounding import BBox, DecoderBlock, GroundingHead, grounding_loss
from .model import VZenModel
from .nn import Embedding, Module
from .projector import ProjectionAdapter
from .records import GuideRecord
from .rng import Rng
from .tensor import Tensor, concat, masked_fill, maximum, minimum, stack, where
from .vision import (
    EncoderBlock,
    ImageRaster,
    MultiScaleBackbone,
    MultiScaleFeatures,
    PatchMerging,
    PatchTokens,
    VisionEncoder,
    WindowBlock,
)

GRADCHECK_TOLERANCE = 1.0e-4
"""Largest accepted relative error.
"""

# Initialization scale of checked layers; the training scale leaves most
# gradients at round-off level.
_CHECK_STD = 0.3

Build = Callable[[Rng], Tuple[Callable[..., Tensor], List[Tensor]]]


@dataclasses.dataclass(frozen=True)
class GradcheckCase:
    """One checked function.

    ``build`` returns the function and its inputs for a random stream;
    ``entries`` caps how many input entries are compared.
    """

    name: str
    build: Build
    entries: Optional[int] = 24


@dataclasses.dataclass(frozen=True)
class GradcheckResult:
    name: str
    seed: int
    max_error: float
    passed: bool


def _leaf(rng: Rng, shape, std: float = 1.0) -> Tensor:
    return Tensor(rng.normal(shape, std), requires_grad=True)


def _positive(rng: Rng, shape) -> Tensor:
    return Tensor(rng.uniform(0.5, 2.0, shape), requires_grad=True)


def _rescaled(module: Module, rng: Rng) -> List[Tensor]:
    """Redraw every parameter at the check scale and return them."""
    params = module.parameters()
    for i, param in enumerate(params):
        param.data = rng.child(i).normal(param.shape, _CHECK_STD)
    return params


def _arithmetic(rng):
    a, b = _leaf(rng, (3, 4)), _positive(rng, (4,))
    return (lambda a, b: (a + b) * a - a / b - (-b)), [a, b]


def _exp_log_sqrt(rng):
    a = _positive(rng, (3, 4))
    return (lambda a: a.log() + a.sqrt() * 0.5 + (a * 0.3).exp()), [a]


def _tanh_sigmoid_pow(rng):
    a, b = _leaf(rng, (5,)), _positive(rng, (5,))
    return (lambda a, b: a.tanh() * a.sigmoid() + b**1.5 + a**2), [a, b]


def _matmul(rng):
    a, b = _leaf(rng, (2, 3, 4)), _leaf(rng, (4, 5))
    return (lambda a, b: a @ b), [a, b]


def _reductions(rng):
    a = _leaf(rng, (3, 4))
    return (lambda a: a.sum(axis=0) * a.mean(axis=1, keepdims=True).reshape(3, 1)), [a]


def _structural(rng):
    a, b = _leaf(rng, (2, 3)), _leaf(rng, (2, 3))
    mask = rng.uniform(size=(2, 3)) > 0.5

    def fn(a, b):
        joined = concat([a, b.transpose(1, 0).reshape(2, 3)], axis=1)
        stacked = stack([a[:, 1:], b[0:2, :2]], axis=0)
        return joined.sum() * where(mask, a, b) + stacked.sum(axis=0).sum()

    return fn, [a, b]


def _elementwise_kinks(rng):
    # Shift values away from zero and from each other so no kink is hit.
    a = Tensor(rng.normal((6,)) + np.linspace(-3.0, 3.0, 6) * 0.1, requires_grad=True)
    b = Tensor(a.data + rng.uniform(0.05, 0.5, 6) * np.sign(rng.normal((6,))), requires_grad=True)
    return (lambda a, b: maximum(a, b) * minimum(a, b) + a.abs() + b.relu()), [a, b]


def _masked_softmax(rng):
    a = _leaf(rng, (4, 4))
    mask = causal_mask(4)
    return (lambda a: softmax(masked_fill(a, mask, -1e9), axis=-1)), [a]


def _log_softmax(rng):
    a = _leaf(rng, (3, 7))
    return (lambda a: log_softmax(a, axis=-1)), [a]


def _layer_norm(rng):
    x, g, b = _leaf(rng, (3, 6)), _leaf(rng, (6,)), _leaf(rng, (6,))
    return (lambda x, g, b: layer_norm(x, g, b)), [x, g, b]


def _gelu(rng):
    x = _leaf(rng, (10,), 2.0)
    return gelu, [x]


def _cross_entropy(rng):
    logits = _leaf(rng, (6, 9))
    targets = np.array([rng.integers(0, 9) for _ in range(6)])
    targets[2] = IGNORE_INDEX
    return (lambda logits: cross_entropy(logits, targets)), [logits]


def _binary_cross_entropy(rng):
    logits = _leaf(rng, (5,))
    target = rng.uniform(size=5)
    return (lambda logits: binary_cross_entropy_with_logits(logits, target)), [logits]


def _embedding(rng):
    table = Embedding(7, 4, rng)
    ids = np.array([1, 3, 3, 6, 0])
    return (lambda w: table(ids) * 1.0), _rescaled(table, rng.child(1))


def _attention(rng):
    q, k, v = _leaf(rng, (5, 8)), _leaf(rng, (5, 8)), _leaf(rng, (5, 8))
    blocked = causal_mask(5)
    return (lambda q, k, v: scaled_dot_product_attention(q, k, v, 2, blocked)), [q, k, v]


def _encoder_block(rng):
    block = EncoderBlock(8, 2, rng.child(0))
    x = _leaf(rng, (5, 8))
    return (lambda x, *params: block(x)), [x] + _rescaled(block, rng.child(1))


def _vision_encoder(rng):
    encoder = VisionEncoder(16, 8, 8, 2, 2, rng.child(0))
    image = Tensor(rng.uniform(size=(16, 16, 3)), requires_grad=True)
    return (lambda image, *params: encoder.encode(image)), [image] + _rescaled(
        encoder, rng.child(1)
    )


def _window_block(rng):
    block = WindowBlock(4, 2, 2, rng.child(0))
    x = _leaf(rng, (4, 4, 4))
    return (lambda x, *params: block(x)), [x] + _rescaled(block, rng.child(1))


def _patch_merging(rng):
    merge = PatchMerging(4, 8, rng.child(0))
    x = _leaf(rng, (4, 4, 4))
    return (lambda x, *params: merge(x)), [x] + _rescaled(merge, rng.child(1))


def _multiscale_backbone(rng):
    config = small_model_config()
    backbone = MultiScaleBackbone(config.vision, rng.child(0))
    image = Tensor(rng.uniform(size=(32, 32, 3)), requires_grad=True)

    def fn(image, *params):
        levels = backbone.encode(image).levels
        return concat([level.reshape(-1) for level in levels], axis=0)

    return fn, [image] + _rescaled(backbone, rng.child(1))


def _projection_adapter(rng):
    adapter = ProjectionAdapter(8, 16, rng.child(0))
    f_lr = _leaf(rng, (4, 8))
    return (lambda f_lr, *params: adapter(PatchTokens(f_lr, 2)).values), [f_lr] + _rescaled(
        adapter, rng.child(1)
    )


def _backbone_layer(variant: str) -> Build:
    def build(rng):
        config = small_model_config(backbone_variant=variant)
        layer = BackboneLayer(config, rng.child(0))
        x = _leaf(rng, (6, config.model_dim))
        x_hi = _leaf(rng, (4, config.vision.hr_dim))
        mask = np.array([True, True, True, False, False, False])
        return (lambda x, x_hi, *params: layer(x, mask, x_hi)), [x, x_hi] + _rescaled(
            layer, rng.child(1)
        )

    return build


def _cross_fusion(rng):
    fusion = CrossFusion(16, 8, 4, 2, rng.child(0))
    x, x_hi = _leaf(rng, (3, 16)), _leaf(rng, (5, 8))
    return (lambda x, x_hi, *params: fusion(x, x_hi)), [x, x_hi] + _rescaled(fusion, rng.child(1))


def _decoder_block(rng):
    block = DecoderBlock(8, 2, rng.child(0))
    query, keys, memory = _leaf(rng, (1, 8)), _leaf(rng, (6, 8)), _leaf(rng, (6, 8))
    return (lambda q, k, m, *params: block(q, k, m)), [query, keys, memory] + _rescaled(
        block, rng.child(1)
    )


def _grounding_head(rng):
    config = small_model_config()
    head = GroundingHead(config, rng.child(0))
    query = _leaf(rng, (config.model_dim,))
    levels = [
        _leaf(rng.child(10 + i), (size, size, dim))
        for i, (size, dim) in enumerate(zip(config.vision.ms_sizes, config.vision.ms_dims))
    ]

    def fn(query, *rest):
        out = head(query, MultiScaleFeatures(list(rest[: len(levels)]), config.vision.ms_strides))
        return concat([out.box, out.confidence_logit.reshape(1)], axis=0)

    return fn, [query] + levels + _rescaled(head, rng.child(1))


def _grounding_loss(rng):
    target = BBox(0.45, 0.55, 0.3, 0.25)
    offset = rng.uniform(0.02, 0.06, 4) * np.array([1, -1, 1, -1])
    pred = Tensor(target.as_array() + offset, requires_grad=True)
    return (lambda pred: grounding_loss(pred, target)), [pred]


def _model_loss(rng):
    config = small_model_config()
    model = VZenModel(config, seed=rng.integers(0, 2**31))
    record = GuideRecord(
        image_ref="images/check.png",
        task="Click the 'Save' button",
        history=("OPEN(Inbox)",),
        last_action="TYPE(To, bob)",
        next_action="CLICK(Save)",
        bbox=BBox(0.4, 0.55, 0.2, 0.1),
        platform="gmail",
    )
    image = ImageRaster(rng.uniform(size=(32, 32, 3)))
    # The confidence target is the detached IoU, which finite differences
    # would see move; leave it out.
    train = TrainConfig(conf_w=0.0)
    params = _rescaled(model, rng.child(1))
    return (lambda *params: model.loss(record, image, train).total), params


GRADCHECK_CASES: Tuple[GradcheckCase, ...] = (
    GradcheckCase("arithmetic", _arithmetic, None),
    GradcheckCase("exp_log_sqrt", _exp_log_sqrt, None),
    GradcheckCase("tanh_sigmoid_pow", _tanh_sigmoid_pow, None),
    GradcheckCase("matmul", _matmul, None),
    GradcheckCase("reductions", _reductions, None),
    GradcheckCase("concat_stack_where", _structural, None),
    GradcheckCase("maximum_minimum_abs_relu", _elementwise_kinks, None),
    GradcheckCase("masked_softmax", _masked_softmax, None),
    GradcheckCase("log_softmax", _log_softmax, None),
    GradcheckCase("layer_norm", _layer_norm, None),
    GradcheckCase("gelu", _gelu, None),
    GradcheckCase("cross_entropy", _cross_entropy, None),
    GradcheckCase("binary_cross_entropy", _binary_cross_entropy, None),
    GradcheckCase("embedding", _embedding, None),
    GradcheckCase("attention", _attention),
    GradcheckCase("encoder_block", _encoder_block),
    GradcheckCase("vision_encoder", _vision_encoder),
    GradcheckCase("window_block", _window_block),
    GradcheckCase("patch_merging", _patch_merging),
    GradcheckCase("multiscale_backbone", _multiscale_backbone),
    GradcheckCase("projection_adapter", _projection_adapter),
    GradcheckCase("backbone_layer", _backbone_layer("standard")),
    GradcheckCase("backbone_layer_gated", _backbone_layer("gated")),
    GradcheckCase("cross_fusion", _cross_fusion),
    GradcheckCase("decoder_block", _decoder_block),
    GradcheckCase("grounding_head", _grounding_head),
    GradcheckCase("grounding_loss", _grounding_loss, None),
    GradcheckCase("model_loss", _model_loss, 10),
)


def run_gradcheck_suite(
    seeds: Sequence[int] = (0, 1, 2),
    names: Optional[Sequence[str]] = None,
    tolerance: float = GRADCHECK_TOLERANCE,
    log: Optional[logging.Logger] = None,
) -> List[GradcheckResult]:
    """Check every case (or the named ones) once per seed.

    Raises
    ------
    KeyError
        If a name is not a known case.
    """
    log = log if log is not None else logging.getLogger("run_gradcheck_suite")
    index = {case.name: i for i, case in enumerate(GRADCHECK_CASES)}
    selected = list(names) if names is not None else list(index)
    results = []
    start = time.monotonic()
    for name in selected:
        case = GRADCHECK_CASES[index[name]]
        for seed in seeds:
            rng = Rng(seed, (index[name],))
            fn, inputs = case.build(rng.child(0))
            error = gradcheck(fn, inputs, entries=case.entries, rng=rng.child(1))
            result = GradcheckResult(case.name, seed, error, error < tolerance)
            log.debug(f"{case.name} seed={seed}: max relative error {error:.3g}")
            if not result.passed:
                log.warning(f"{case.name} seed={seed}: relative error {error:.3g} >= {tolerance}")
            results.append(result)
    log.info(
        f"Gradient check: {sum(r.passed for r in results)}/{len(results)} passed "
        f"in {time.monotonic() - start:.1f} s"
    )
    return results
