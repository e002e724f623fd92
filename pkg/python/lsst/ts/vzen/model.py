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

"""The complete model: encoders, projection, backbone and grounding head."""

__all__ = ["ImageFeatures", "LossTerms", "Prediction", "VZenModel"]

import dataclasses
import logging
from typing import List, Optional

from .backbone import BackboneOutput, FusionBackbone
from .config import ModelConfig, TrainConfig
from .errors import ShapeError
from .functional import cross_entropy
from .grounding import BBox, GroundingHead, confidence_loss, decode_box_buckets, grounding_loss
from .nn import Module
from .projector import ProjectedTokens, ProjectionAdapter
from .prompt import TrainingExample, build_prompt_ids
from .records import GuideRecord
from .rng import Rng
from .scene import normalize_action
from .tensor import Tensor, no_grad
from .tokenizer import SpecialToken, detokenize
from .vision import (
    ImageRaster,
    MultiScaleBackbone,
    MultiScaleFeatures,
    PatchTokens,
    VisionEncoder,
)


@dataclasses.dataclass(frozen=True, eq=False)
class ImageFeatures:
    """Everything the model derives from one screen image."""

    f_t: ProjectedTokens
    x_hi: Optional[PatchTokens]
    f_ms: Optional[MultiScaleFeatures]


@dataclasses.dataclass(frozen=True, eq=False)
class LossTerms:
    total: Tensor
    text: float
    box: float
    confidence: float


@dataclasses.dataclass(frozen=True)
class Prediction:
    """Decoded next action and box; ``bbox`` is None when no box could be
    read from coordinate tokens.
    """

    action: str
    bbox: Optional[BBox]
    confidence: float
    token_ids: tuple

    def normalized_action(self) -> str:
        return normalize_action(self.action)


class VZenModel(Module):
    """Multimodal model with visual experts, high resolution fusion and a
    separate grounding head.

    Parameters
    ----------
    config : `ModelConfig`
        Sizes and ablation flags.
    seed : `int`, optional
        Initialization seed.
    log : `logging.Logger`, optional
        Parent logger.

    Notes
    -----
    With ``use_grounding_head`` False there is neither pyramid nor head;
    boxes are written as coordinate tokens inside the action text.
    With ``use_hrcvm`` False there is no high resolution encoder and no
    cross-attention fusion.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, log: Optional[logging.Logger] = None):
        if log is None:
            self.log = logging.getLogger(type(self).__name__)
        else:
            self.log = log.getChild(type(self).__name__)
        self.config = config
        self.seed = seed
        vision = config.vision
        dtype = config.np_dtype
        rng = Rng(seed)
        self.lrvfe = VisionEncoder(
            vision.lr_resolution,
            vision.lr_patch,
            vision.lr_dim,
            vision.depth,
            vision.heads,
            rng.child(0),
            dtype,
        )
        self.projector = ProjectionAdapter(
            vision.lr_dim,
            config.model_dim,
            rng.child(1),
            layers=config.mpa_layers,
            use_mlp=config.use_mpa,
            dtype=dtype,
        )
        self.hrcvm = (
            VisionEncoder(
                vision.hr_resolution,
                vision.hr_patch,
                vision.hr_dim,
                vision.hr_depth,
                vision.heads,
                rng.child(2),
                dtype,
            )
            if config.use_hrcvm
            else None
        )
        self.backbone = FusionBackbone(config, rng.child(3), log=self.log)
        if config.use_grounding_head:
            self.msbackbone = MultiScaleBackbone(vision, rng.child(4), dtype)
            self.grounding = GroundingHead(config, rng.child(5), dtype)
        else:
            self.msbackbone = None
            self.grounding = None
        self.log.debug(
            f"Built model with {self.num_parameters()} parameters; "
            f"hrcvm={config.use_hrcvm} grounding_head={config.use_grounding_head} "
            f"mpa={config.use_mpa} variant={config.backbone_variant}"
        )

    @property
    def coordinate_buckets(self) -> Optional[int]:
        return None if self.config.use_grounding_head else self.config.coordinate_buckets

    def _check_resolution(self, image: ImageRaster, resolution: int) -> None:
        if (image.height, image.width) != (resolution, resolution):
            raise ShapeError(
                f"expected a {resolution}x{resolution} image, got {image.height}x{image.width}"
            )

    def lrvfe_forward(self, image: ImageRaster) -> PatchTokens:
        """Encode the low resolution view.

        Raises
        ------
        ShapeError
            If ``image`` is not at ``lr_resolution``.
        """
        self._check_resolution(image, self.config.vision.lr_resolution)
        return self.lrvfe(image)

    def hrcvm_encode(self, image: ImageRaster) -> PatchTokens:
        """Encode the high resolution view with the narrower encoder."""
        if self.hrcvm is None:
            raise ShapeError("high resolution encoder is disabled in this configuration")
        self._check_resolution(image, self.config.vision.hr_resolution)
        return self.hrcvm(image)

    def msbackbone_forward(self, image: ImageRaster) -> MultiScaleFeatures:
        if self.msbackbone is None:
            raise ShapeError("multi-scale backbone is disabled in this configuration")
        self._check_resolution(image, self.config.vision.hr_resolution)
        return self.msbackbone(image)

    def encode_image(self, image: ImageRaster) -> ImageFeatures:
        """Encode both resolutions of a screen image."""
        vision = self.config.vision
        low = image.resized(vision.lr_resolution)
        f_t = self.projector(self.lrvfe_forward(low))
        x_hi = f_ms = None
        if self.hrcvm is not None or self.msbackbone is not None:
            high = image.resized(vision.hr_resolution)
            if self.hrcvm is not None:
                x_hi = self.hrcvm_encode(high)
            if self.msbackbone is not None:
                f_ms = self.msbackbone_forward(high)
        return ImageFeatures(f_t, x_hi, f_ms)

    def run_backbone(self, features: ImageFeatures, text_ids) -> BackboneOutput:
        seq = self.backbone.embed_and_assemble(features.f_t, text_ids)
        return self.backbone(seq, features.x_hi)

    def example(self, record: GuideRecord, with_target: bool = True) -> TrainingExample:
        return build_prompt_ids(record, with_target, self.coordinate_buckets)

    def loss(
        self, record: GuideRecord, image: ImageRaster, train: Optional[TrainConfig] = None
    ) -> LossTerms:
        """Joint loss of one record.

        ``text_w`` times the next-action cross-entropy, plus, with the
        grounding head, ``box_w`` times the box loss on the prediction made
        from the hidden state at ``ACT_END`` and ``conf_w`` times the
        confidence loss.
        """
        train = train if train is not None else TrainConfig()
        features = self.encode_image(image)
        example = self.example(record)
        out = self.run_backbone(features, example.input_ids)
        text = cross_entropy(out.logits, example.full_labels(self.backbone.image_span(features.f_t)))
        total = text * train.text_w
        box_value = conf_value = 0.0
        if self.grounding is not None:
            ground = self.grounding(out.last_hidden, features.f_ms)
            box = grounding_loss(ground.box, record.bbox, train.l1_w, train.giou_w)
            conf = confidence_loss(ground, record.bbox)
            total = total + box * train.box_w + conf * train.conf_w
            box_value, conf_value = box.item(), conf.item()
        return LossTerms(total, text.item(), box_value, conf_value)

    def predict(self, record: GuideRecord, image: ImageRaster) -> Prediction:
        """Decode the next action greedily and predict its box.

        With the grounding head, the box comes from the hidden state at the
        ``ACT_END`` appended after the generated action; otherwise it is
        read from the generated coordinate tokens.
        """
        with no_grad():
            features = self.encode_image(image)
            prompt = list(self.example(record, with_target=False).input_ids)
            generated = self.backbone.generate(
                features.f_t, prompt, features.x_hi, stop_id=int(SpecialToken.ACT_END)
            )
            action = detokenize(generated)
            if self.grounding is None:
                bbox = decode_box_buckets(generated, self.config.coordinate_buckets)
                return Prediction(action, bbox, 0.0, tuple(generated))
            ids = self._grounding_ids(prompt, generated, self.backbone.image_span(features.f_t))
            out = self.run_backbone(features, ids)
            bbox, confidence = self.grounding.ground(out.last_hidden, features.f_ms)
        return Prediction(action, bbox, confidence, tuple(generated))

    def _grounding_ids(self, prompt: List[int], generated: List[int], image_count: int) -> List[int]:
        ids = prompt + generated + [int(SpecialToken.ACT_END)]
        room = self.config.max_seq - image_count
        if len(ids) > room:
            # Generation stopped at the context limit; keep the closing token.
            ids = ids[: room - 1] + [int(SpecialToken.ACT_END)]
        return ids

