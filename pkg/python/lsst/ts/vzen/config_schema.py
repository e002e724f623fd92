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

__all__ = ["CONFIG_SCHEMA"]

import yaml

CONFIG_SCHEMA = yaml.safe_load(
    """
    $schema: http://json-schema.org/draft-07/schema#
    $id: https://github.com/lsst-ts/ts_vzen/blob/master/python/lsst/ts/vzen/config_schema.py
    # title must end with one or more spaces followed by the schema version, which must begin with "v"
    title: VZen v1
    description: Schema for V-Zen model, training and data configuration files
    type: object
    additionalProperties: false
    properties:
      vision:
        description: Image encoders and the multi-scale backbone.
        type: object
        additionalProperties: false
        default: {}
        properties:
          lr_resolution:
            description: Side of the low resolution input image, in pixels.
            type: integer
            minimum: 1
            default: 64
          hr_resolution:
            description: Side of the high resolution input image, in pixels.
            type: integer
            minimum: 1
            default: 160
          lr_patch:
            description: Patch size of the low resolution encoder.
            type: integer
            minimum: 1
            default: 8
          hr_patch:
            description: Patch size of the high resolution encoder.
            type: integer
            minimum: 1
            default: 16
          lr_dim:
            description: Width of the low resolution encoder.
            type: integer
            minimum: 1
            default: 48
          hr_dim:
            description: Width of the high resolution encoder; must not exceed lr_dim.
            type: integer
            minimum: 1
            default: 32
          depth:
            description: Number of blocks in the low resolution encoder.
            type: integer
            minimum: 0
            default: 2
          hr_depth:
            description: Number of blocks in the high resolution encoder.
            type: integer
            minimum: 0
            default: 1
          heads:
            description: Attention heads in both encoders.
            type: integer
            minimum: 1
            default: 4
          ms_strides:
            description: Pixels per cell of each pyramid level; each level doubles the previous.
            type: array
            items:
              type: integer
              minimum: 1
            minItems: 3
            default: [8, 16, 32]
          ms_dims:
            description: Width of each pyramid level.
            type: array
            items:
              type: integer
              minimum: 1
            minItems: 3
            default: [16, 32, 64]
          ms_depth:
            description: Window attention blocks per pyramid level.
            type: integer
            minimum: 0
            default: 1
          ms_heads:
            description: Attention heads in the pyramid blocks.
            type: integer
            minimum: 1
            default: 2
          window:
            description: Side of the local attention windows, in cells.
            type: integer
            minimum: 1
            default: 5
      model:
        description: Language backbone, fusion and grounding head.
        type: object
        additionalProperties: false
        default: {}
        properties:
          model_dim:
            type: integer
            minimum: 1
            default: 128
          layers:
            type: integer
            minimum: 1
            default: 4
          heads:
            type: integer
            minimum: 1
            default: 4
          mlp_ratio:
            type: integer
            minimum: 1
            default: 4
          max_seq:
            description: Maximum number of image plus text positions.
            type: integer
            minimum: 2
            default: 256
          fusion_dim:
            description: Width of the high resolution cross attention; 0 means model_dim / 4.
            type: integer
            minimum: 0
            default: 0
          fusion_heads:
            type: integer
            minimum: 1
            default: 2
          mpa_layers:
            description: Linear layers in the projection adapter MLP.
            type: integer
            minimum: 1
            default: 2
          decoder_dim:
            description: Width of the grounding decoder.
            type: integer
            minimum: 1
            default: 64
          decoder_layers:
            type: integer
            minimum: 0
            default: 2
          decoder_heads:
            type: integer
            minimum: 1
            default: 4
          coordinate_buckets:
            description: Buckets per axis for boxes written as text when the grounding head is off.
            type: integer
            minimum: 1
            default: 100
          max_new_tokens:
            description: Generation budget for the next action.
            type: integer
            minimum: 1
            default: 48
          dtype:
            type: string
            enum:
            - float32
            - float64
            default: float32
      train:
        description: Training stage hyperparameters and ablation flags.
        type: object
        additionalProperties: false
        default: {}
        properties:
          stage:
            type: string
            enum:
            - pretrain
            - sft
            default: sft
          learning_rate:
            type: number
            exclusiveMinimum: 0
            default: 0.00001
          batch_size:
            type: integer
            minimum: 1
            default: 8
          grad_accum_steps:
            type: integer
            minimum: 1
            default: 1
          max_steps:
            type: integer
            minimum: 0
            default: 200
          seed:
            type: integer
            default: 0
          text_w:
            type: number
            minimum: 0
            default: 1.0
          box_w:
            type: number
            minimum: 0
            default: 1.0
          l1_w:
            type: number
            minimum: 0
            default: 5.0
          giou_w:
            type: number
            minimum: 0
            default: 2.0
          conf_w:
            type: number
            minimum: 0
            default: 1.0
          grad_clip:
            description: Maximum global gradient norm; 0 disables clipping.
            type: number
            minimum: 0
            default: 0
          log_interval:
            type: integer
            minimum: 1
            default: 10
          use_hrcvm:
            description: Fuse high resolution features into every backbone layer.
            type: boolean
            default: true
          use_grounding_head:
            description: Predict boxes with the grounding head instead of text tokens.
            type: boolean
            default: true
          use_mpa:
            description: Use the MLP projection adapter instead of a single linear map.
            type: boolean
            default: true
          backbone_variant:
            type: string
            enum:
            - standard
            - gated
            default: standard
      data:
        description: Synthetic dataset generation.
        type: object
        additionalProperties: false
        default: {}
        properties:
          seed:
            type: integer
            default: 42
          count:
            type: integer
            minimum: 0
            default: 32
          eval_count:
            type: integer
            minimum: 0
            default: 16
          difficulty:
            type: string
            enum:
            - easy
            - small-target
            - cluttered
            default: easy
          canvas:
            description: Side of the rendered screen, in pixels.
            type: integer
            minimum: 32
            default: 160
          workers:
            description: Threads used for generation and evaluation.
            type: integer
            minimum: 1
            default: 4
      ablation:
        description: Ablation suite.
        type: object
        additionalProperties: false
        default: {}
        properties:
          rows:
            description: Cumulative rows to run, in table order.
            type: array
            items:
              type: string
              enum:
              - base
              - hrcvm
              - grounding
              - projection
              - gated
            default: [base, hrcvm, grounding, projection, gated]
          seeds:
            type: array
            items:
              type: integer
            minItems: 1
            default: [0]
          small_target_eval:
            description: Evaluate on the small-target difficulty.
            type: boolean
            default: true
    """
)
