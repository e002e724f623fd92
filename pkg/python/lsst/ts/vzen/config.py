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

"""Configuration dataclasses and loading.

Configuration files are YAML or JSON documents validated against
`CONFIG_SCHEMA`; missing values take the schema defaults. Relations the
schema cannot express are checked when the dataclasses are constructed.
"""

__all__ = [
    "VisionConfig",
    "ModelConfig",
    "TrainConfig",
    "DataConfig",
    "AblationConfig",
    "VZenConfig",
    "DefaultingValidator",
    "validate_config",
    "apply_overrides",
    "load_config",
    "small_model_config",
]

import copy
import dataclasses
import pathlib
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np
import yaml

from .config_schema import CONFIG_SCHEMA
from .errors import ConfigError
from .tokenizer import BASE_VOCAB_SIZE


def _extend_with_default(validator_class):
    validate_properties = validator_class.VALIDATORS["properties"]

    def set_defaults(validator, properties, instance, schema):
        if isinstance(instance, dict):
            for name, subschema in properties.items():
                if "default" in subschema:
                    instance.setdefault(name, copy.deepcopy(subschema["default"]))
        yield from validate_properties(validator, properties, instance, schema)

    return jsonschema.validators.extend(validator_class, {"properties": set_defaults})


DefaultingValidator = _extend_with_default(jsonschema.Draft7Validator)
"""Draft 7 validator that fills in schema defaults while validating.
"""


def validate_config(data: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Return a validated copy of ``data`` with defaults filled in.

    Raises
    ------
    ConfigError
        If ``data`` does not match `CONFIG_SCHEMA`.
    """
    result = copy.deepcopy(data) if data else {}
    try:
        DefaultingValidator(CONFIG_SCHEMA).validate(result)
    except jsonschema.ValidationError as e:
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}") from e
    return result


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


@dataclasses.dataclass(frozen=True)
class VisionConfig:
    """Image encoder and pyramid sizes.

    Raises
    ------
    ConfigError
        If the sizes are inconsistent.
    """

    lr_resolution: int = 64
    hr_resolution: int = 160
    lr_patch: int = 8
    hr_patch: int = 16
    lr_dim: int = 48
    hr_dim: int = 32
    depth: int = 2
    hr_depth: int = 1
    heads: int = 4
    ms_strides: Tuple[int, ...] = (8, 16, 32)
    ms_dims: Tuple[int, ...] = (16, 32, 64)
    ms_depth: int = 1
    ms_heads: int = 2
    window: int = 5

    def __post_init__(self):
        object.__setattr__(self, "ms_strides", tuple(self.ms_strides))
        object.__setattr__(self, "ms_dims", tuple(self.ms_dims))
        _require(
            self.hr_resolution > self.lr_resolution,
            f"hr_resolution={self.hr_resolution} must exceed lr_resolution={self.lr_resolution}",
        )
        _require(
            self.hr_dim <= self.lr_dim,
            f"hr_dim={self.hr_dim} must not exceed lr_dim={self.lr_dim}",
        )
        for name, resolution, patch in (
            ("lr", self.lr_resolution, self.lr_patch),
            ("hr", self.hr_resolution, self.hr_patch),
        ):
            _require(
                resolution % patch == 0,
                f"{name}_resolution={resolution} not divisible by {name}_patch={patch}",
            )
        for name, dim, heads in (
            ("lr_dim", self.lr_dim, self.heads),
            ("hr_dim", self.hr_dim, self.heads),
        ):
            _require(dim % heads == 0, f"{name}={dim} not divisible by heads={heads}")
        _require(
            len(self.ms_strides) >= 3 and len(self.ms_strides) == len(self.ms_dims),
            f"need >= 3 pyramid levels with one dim each; got strides={self.ms_strides} "
            f"dims={self.ms_dims}",
        )
        for previous, stride in zip(self.ms_strides, self.ms_strides[1:]):
            _require(stride == 2 * previous, f"ms_strides={self.ms_strides} must double per level")
        _require(
            list(self.ms_dims) == sorted(self.ms_dims),
            f"ms_dims={self.ms_dims} must be non-decreasing",
        )
        _require(
            self.hr_resolution % self.ms_strides[-1] == 0,
            f"hr_resolution={self.hr_resolution} not divisible through strides {self.ms_strides}",
        )
        for dim in self.ms_dims:
            _require(dim % self.ms_heads == 0, f"ms_dims entry {dim} not divisible by ms_heads")
        for size in self.ms_sizes:
            _require(
                size % min(self.window, size) == 0,
                f"window={self.window} does not tile a {size}x{size} pyramid level",
            )

    @property
    def lr_grid(self) -> int:
        return self.lr_resolution // self.lr_patch

    @property
    def hr_grid(self) -> int:
        return self.hr_resolution // self.hr_patch

    @property
    def lr_tokens(self) -> int:
        return self.lr_grid**2

    @property
    def hr_tokens(self) -> int:
        return self.hr_grid**2

    @property
    def ms_sizes(self) -> Tuple[int, ...]:
        """Side of each pyramid level, in cells."""
        return tuple(self.hr_resolution // stride for stride in self.ms_strides)


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Everything needed to build one model instance.

    The ablation flags are copied from the training configuration.
    """

    vision: VisionConfig = dataclasses.field(default_factory=VisionConfig)
    model_dim: int = 128
    layers: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    max_seq: int = 256
    fusion_dim: int = 0
    fusion_heads: int = 2
    mpa_layers: int = 2
    decoder_dim: int = 64
    decoder_layers: int = 2
    decoder_heads: int = 4
    coordinate_buckets: int = 100
    max_new_tokens: int = 48
    dtype: str = "float32"
    use_hrcvm: bool = True
    use_grounding_head: bool = True
    use_mpa: bool = True
    backbone_variant: str = "standard"

    def __post_init__(self):
        if isinstance(self.vision, dict):
            object.__setattr__(self, "vision", VisionConfig(**self.vision))
        if self.fusion_dim == 0:
            object.__setattr__(self, "fusion_dim", max(self.model_dim // 4, self.fusion_heads))
        _require(
            self.model_dim % self.heads == 0,
            f"model_dim={self.model_dim} not divisible by heads={self.heads}",
        )
        _require(
            self.fusion_dim % self.fusion_heads == 0,
            f"fusion_dim={self.fusion_dim} not divisible by fusion_heads={self.fusion_heads}",
        )
        _require(
            self.decoder_dim % self.decoder_heads == 0,
            f"decoder_dim={self.decoder_dim} not divisible by decoder_heads={self.decoder_heads}",
        )
        _require(
            self.decoder_dim % 4 == 0,
            f"decoder_dim={self.decoder_dim} must be a multiple of 4 for the position encoding",
        )
        _require(
            self.max_seq > self.vision.lr_tokens + 1,
            f"max_seq={self.max_seq} leaves no room for text after the image marker and "
            f"{self.vision.lr_tokens} image tokens",
        )
        _require(self.dtype in ("float32", "float64"), f"unsupported dtype {self.dtype!r}")
        _require(
            self.backbone_variant in ("standard", "gated"),
            f"unknown backbone_variant {self.backbone_variant!r}",
        )

    @property
    def vocab_size(self) -> int:
        """Byte and special tokens, plus coordinate buckets when boxes are
        written as text.
        """
        if self.use_grounding_head:
            return BASE_VOCAB_SIZE
        return BASE_VOCAB_SIZE + self.coordinate_buckets

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        data = dict(data)
        vision = data.pop("vision", {})
        try:
            return cls(vision=VisionConfig(**vision), **data)
        except TypeError as e:
            raise ConfigError(f"bad model config: {e}") from e


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training stage."""

    stage: str = "sft"
    learning_rate: float = 1e-5
    batch_size: int = 8
    grad_accum_steps: int = 1
    max_steps: int = 200
    seed: int = 0
    text_w: float = 1.0
    box_w: float = 1.0
    l1_w: float = 5.0
    giou_w: float = 2.0
    conf_w: float = 1.0
    grad_clip: float = 0.0
    log_interval: int = 10
    use_hrcvm: bool = True
    use_grounding_head: bool = True
    use_mpa: bool = True
    backbone_variant: str = "standard"

    def __post_init__(self):
        _require(self.stage in ("pretrain", "sft"), f"unknown stage {self.stage!r}")
        _require(self.batch_size >= 1, f"batch_size={self.batch_size} must be positive")
        _require(
            self.grad_accum_steps >= 1,
            f"grad_accum_steps={self.grad_accum_steps} must be positive",
        )
        _require(self.max_steps >= 0, f"max_steps={self.max_steps} must not be negative")
        _require(self.learning_rate > 0, f"learning_rate={self.learning_rate} must be positive")
        _require(self.log_interval >= 1, f"log_interval={self.log_interval} must be positive")

    @property
    def effective_batch(self) -> int:
        return self.batch_size * self.grad_accum_steps

    @property
    def flags(self) -> Dict[str, Any]:
        return dict(
            use_hrcvm=self.use_hrcvm,
            use_grounding_head=self.use_grounding_head,
            use_mpa=self.use_mpa,
            backbone_variant=self.backbone_variant,
        )


@dataclasses.dataclass(frozen=True)
class DataConfig:
    seed: int = 42
    count: int = 32
    eval_count: int = 16
    difficulty: str = "easy"
    canvas: int = 160
    workers: int = 4

    def __post_init__(self):
        _require(
            self.difficulty in ("easy", "small-target", "cluttered"),
            f"unknown difficulty {self.difficulty!r}",
        )


@dataclasses.dataclass(frozen=True)
class AblationConfig:
    rows: Tuple[str, ...] = ("base", "hrcvm", "grounding", "projection", "gated")
    seeds: Tuple[int, ...] = (0,)
    small_target_eval: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "seeds", tuple(self.seeds))


@dataclasses.dataclass(frozen=True)
class VZenConfig:
    """Complete validated configuration."""

    model: ModelConfig
    train: TrainConfig
    data: DataConfig
    ablation: AblationConfig

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "VZenConfig":
        """Validate ``data``, fill in defaults and build the dataclasses.

        Raises
        ------
        ConfigError
            If the configuration is invalid.
        """
        data = validate_config(data)
        train = TrainConfig(**data["train"])
        model = ModelConfig(
            vision=VisionConfig(**data["vision"]), **data["model"], **train.flags
        )
        return cls(
            model=model,
            train=train,
            data=DataConfig(**data["data"]),
            ablation=AblationConfig(**data["ablation"]),
        )


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Return a copy of ``data`` with dotted ``section.key=value`` overrides.

    Values are parsed as YAML, so ``train.max_steps=10`` sets an integer and
    ``train.use_hrcvm=false`` a boolean.

    Raises
    ------
    ConfigError
        If an override is not of the form ``a.b=value``.
    """
    result = copy.deepcopy(data) if data else {}
    for item in overrides:
        path, sep, text = item.partition("=")
        keys = path.strip().split(".")
        if not sep or not all(keys):
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        node = result
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {key!r} is not a section")
        try:
            node[keys[-1]] = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"override {item!r}: cannot parse value") from e
    return result


def load_config(
    path: Union[str, pathlib.Path, None] = None, overrides: Sequence[str] = ()
) -> VZenConfig:
    """Read a YAML or JSON configuration file and apply overrides.

    Parameters
    ----------
    path : `str` or `pathlib.Path`, optional
        Configuration file; schema defaults are used if None.
    overrides : `list` [`str`]
        Dotted ``section.key=value`` overrides, applied in order.

    Raises
    ------
    ConfigError
        If the file cannot be parsed or the result is invalid.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must contain a mapping")
    return VZenConfig.from_dict(apply_overrides(data, overrides))


def small_model_config(**overrides) -> ModelConfig:
    """A very small float64 model, for gradient checks and unit tests.

    Keyword arguments replace `ModelConfig` fields.
    """
    vision = VisionConfig(
        lr_resolution=16,
        hr_resolution=32,
        lr_patch=8,
        hr_patch=8,
        lr_dim=8,
        hr_dim=8,
        depth=1,
        hr_depth=1,
        heads=2,
        ms_strides=(8, 16, 32),
        ms_dims=(4, 8, 8),
        ms_depth=1,
        ms_heads=2,
        window=2,
    )
    fields = dict(
        vision=vision,
        model_dim=16,
        layers=2,
        heads=2,
        max_seq=256,
        fusion_heads=2,
        decoder_dim=8,
        decoder_layers=1,
        decoder_heads=2,
        max_new_tokens=48,
        dtype="float64",
    )
    fields.update(overrides)
    return ModelConfig(**fields)
