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

import math
import unittest

import numpy as np
import numpy.testing

from lsst.ts.vzen.backbone import BackboneLayer, FusionBackbone
from lsst.ts.vzen.config import small_model_config
from lsst.ts.vzen.errors import ContractError, ShapeError, TruncationError
from lsst.ts.vzen.mock.mock_backbone import constant_logit_backbone
from lsst.ts.vzen.projector import ProjectedTokens
from lsst.ts.vzen.rng import Rng
from lsst.ts.vzen.tensor import Tensor
from lsst.ts.vzen.tokenizer import SpecialToken
from lsst.ts.vzen.vision import PatchTokens


def vanilla_layer_norm(x, eps=1e-5):
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


def vanilla_gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def vanilla_softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def vanilla_transformer_layer(x, expert, heads):
    """Plain causal pre-norm transformer layer using one expert's weights."""

    def linear(v, lin):
        return v @ lin.weight.data + lin.bias.data

    length, dim = x.shape
    head_dim = dim // heads
    h = vanilla_layer_norm(x)
    q, k, v = (linear(h, lin) for lin in (expert.q_proj, expert.k_proj, expert.v_proj))
    outs = []
    for i in range(heads):
        cols = slice(i * head_dim, (i + 1) * head_dim)
        scores = q[:, cols] @ k[:, cols].T / math.sqrt(head_dim)
        scores[np.triu(np.ones((length, length), dtype=bool), k=1)] = -1e9
        outs.append(vanilla_softmax(scores) @ v[:, cols])
    x = x + linear(np.concatenate(outs, axis=1), expert.o_proj)
    h = vanilla_layer_norm(x)
    return x + linear(vanilla_gelu(linear(h, expert.mlp.fc1)), expert.mlp.fc2)


def zero_output_projections(layer):
    """Zero every map that writes into the residual stream of ``layer``."""
    linears = [e.o_proj for e in (layer.text_expert, layer.image_expert)]
    linears += [e.mlp.fc2 for e in (layer.text_expert, layer.image_expert)]
    if layer.fusion is not None:
        linears.append(layer.fusion.attn.o_proj)
    for linear in linears:
        linear.weight.data[...] = 0
        linear.bias.data[...] = 0


class BackboneLayerTestCase(unittest.TestCase):
    def setUp(self):
        self.config = small_model_config(use_hrcvm=False)
        self.layer = BackboneLayer(self.config, Rng(0))

    def test_text_only_matches_vanilla_transformer(self):
        for i in range(20):
            length = 2 + i % 7
            x = Rng(100 + i).normal((length, self.config.model_dim))
            mask = np.zeros(length, dtype=bool)
            out = self.layer.self_attention(Tensor(x), mask)
            expected = vanilla_transformer_layer(x, self.layer.text_expert, self.config.heads)
            numpy.testing.assert_allclose(out.data, expected, rtol=1e-10, atol=1e-12)

    def test_image_only_uses_image_expert(self):
        x = Rng(5).normal((6, self.config.model_dim))
        out = self.layer.self_attention(Tensor(x), np.ones(6, dtype=bool))
        expected = vanilla_transformer_layer(x, self.layer.image_expert, self.config.heads)
        numpy.testing.assert_allclose(out.data, expected, rtol=1e-10, atol=1e-12)

    def test_identical_experts_equal_single_expert(self):
        self.layer.image_expert.load_state_dict(self.layer.text_expert.state_dict())
        for i in range(100):
            length = 2 + i % 9
            x = Tensor(Rng(i).normal((length, self.config.model_dim)))
            mask = np.arange(length) < 1 + i % (length - 1)
            routed = self.layer.self_attention(x, mask)
            plain = self.layer.self_attention(x, np.zeros(length, dtype=bool))
            numpy.testing.assert_array_equal(routed.data, plain.data)

    def test_distinct_experts_change_image_positions(self):
        x = Tensor(Rng(1).normal((5, self.config.model_dim)))
        mask = np.array([True, True, False, False, False])
        routed = self.layer.self_attention(x, mask).data
        plain = self.layer.self_attention(x, np.zeros(5, dtype=bool)).data
        self.assertFalse(np.allclose(routed[:2], plain[:2]))

    def test_causality(self):
        x = Rng(2).normal((6, self.config.model_dim))
        changed = x.copy()
        changed[-1] += 1.0
        mask = np.arange(6) < 3
        a = self.layer.self_attention(Tensor(x), mask).data
        b = self.layer.self_attention(Tensor(changed), mask).data
        numpy.testing.assert_allclose(a[:-1], b[:-1], rtol=1e-12, atol=1e-14)
        self.assertFalse(np.allclose(a[-1], b[-1]))

    def test_zeroed_output_projections_are_identity(self):
        zero_output_projections(self.layer)
        x = Tensor(Rng(7).normal((6, self.config.model_dim)))
        mask = np.arange(6) < 2
        numpy.testing.assert_array_equal(self.layer(x, mask).data, x.data)

    def test_mask_shape_mismatch(self):
        x = Tensor(np.zeros((4, self.config.model_dim)))
        with self.assertRaises(ShapeError):
            self.layer.self_attention(x, np.zeros(3, dtype=bool))

    def test_zeroed_fusion_is_identity(self):
        config = small_model_config(use_hrcvm=True)
        layer = BackboneLayer(config, Rng(3))
        layer.fusion.attn.o_proj.weight.data[...] = 0
        x = Tensor(Rng(4).normal((5, config.model_dim)))
        x_hi = Tensor(Rng(6).normal((16, config.vision.hr_dim)))
        mask = np.arange(5) < 2
        numpy.testing.assert_array_equal(
            layer(x, mask, x_hi).data, layer.self_attention(x, mask).data
        )

    def test_fusion_width_mismatch(self):
        config = small_model_config(use_hrcvm=True)
        layer = BackboneLayer(config, Rng(3))
        x = Tensor(np.zeros((3, config.model_dim)))
        with self.assertRaises(ShapeError):
            layer(x, np.zeros(3, dtype=bool), Tensor(np.zeros((4, config.vision.hr_dim + 1))))


class FusionBackboneTestCase(unittest.TestCase):
    def setUp(self):
        self.config = small_model_config(use_hrcvm=False)
        self.backbone = FusionBackbone(self.config, Rng(0))

    def image_tokens(self, count):
        return ProjectedTokens(Tensor(Rng(9).normal((count, self.config.model_dim))))

    def test_assemble(self):
        image = self.image_tokens(4)
        seq = self.backbone.embed_and_assemble(image, [65, 66, 67])
        self.assertEqual(len(seq), 8)
        self.assertEqual(self.backbone.image_span(image), 5)
        self.assertEqual(seq.embeddings.shape, (8, self.config.model_dim))
        numpy.testing.assert_array_equal(seq.image_mask, [True] * 5 + [False] * 3)
        numpy.testing.assert_array_equal(seq.token_ids[:5], [int(SpecialToken.IMG)] * 5)
        numpy.testing.assert_array_equal(seq.token_ids[5:], [65, 66, 67])

    def test_image_marker_leads_the_sequence(self):
        image = self.image_tokens(4)
        seq = self.backbone.embed_and_assemble(image, [65])
        self.assertEqual(seq.token_ids[0], int(SpecialToken.IMG))
        embedding = self.backbone.token_embedding.weight.data
        numpy.testing.assert_array_equal(seq.embeddings.data[0], embedding[int(SpecialToken.IMG)])
        numpy.testing.assert_array_equal(seq.embeddings.data[1:5], image.values.data)
        numpy.testing.assert_array_equal(seq.embeddings.data[5], embedding[65])

    def test_assemble_text_only(self):
        seq = self.backbone.embed_and_assemble(None, [1, 2])
        self.assertFalse(seq.image_mask.any())

    def test_assemble_errors(self):
        with self.assertRaises(ContractError):
            self.backbone.embed_and_assemble(self.image_tokens(2), [])
        with self.assertRaises(TruncationError):
            self.backbone.embed_and_assemble(
                self.image_tokens(4), [65] * (self.config.max_seq - 4)
            )
        narrow = ProjectedTokens(Tensor(np.zeros((2, self.config.model_dim - 1))))
        with self.assertRaises(ShapeError):
            self.backbone.embed_and_assemble(narrow, [65])

    def test_max_seq_fits_exactly(self):
        seq = self.backbone.embed_and_assemble(
            self.image_tokens(4), [65] * (self.config.max_seq - 5)
        )
        self.assertEqual(len(seq), self.config.max_seq)

    def test_forward(self):
        seq = self.backbone.embed_and_assemble(self.image_tokens(4), [65, 66, 67])
        out = self.backbone(seq)
        self.assertEqual(out.logits.shape, (8, self.config.vocab_size))
        self.assertEqual(out.last_index, 7)
        numpy.testing.assert_array_equal(out.last_hidden.data, out.hidden.data[7])

    def test_last_hidden_ignores_trailing_padding(self):
        pad = int(SpecialToken.PAD)
        image = self.image_tokens(2)
        plain = self.backbone(self.backbone.embed_and_assemble(image, [65, 66]))
        padded = self.backbone(self.backbone.embed_and_assemble(image, [65, 66, pad, pad, pad]))
        self.assertEqual(plain.last_index, 4)
        self.assertEqual(padded.last_index, 4)
        numpy.testing.assert_allclose(
            padded.last_hidden.data, plain.last_hidden.data, rtol=1e-12, atol=1e-12
        )

    def test_zeroed_layers_pass_embeddings_to_final_norm(self):
        config = small_model_config(use_hrcvm=True)
        backbone = FusionBackbone(config, Rng(1))
        for layer in backbone.layers:
            zero_output_projections(layer)
        seq = backbone.embed_and_assemble(self.image_tokens(4), [65, 66, 67])
        x_hi = PatchTokens(Tensor(Rng(3).normal((16, config.vision.hr_dim))), 4)
        out = backbone(seq, x_hi)
        expected = backbone.final_norm(seq.embeddings + backbone.position[: len(seq)])
        numpy.testing.assert_array_equal(out.hidden.data, expected.data)

    def test_causal_with_high_resolution_fusion(self):
        config = small_model_config(use_hrcvm=True)
        backbone = FusionBackbone(config, Rng(2))
        x_hi = PatchTokens(Tensor(Rng(4).normal((16, config.vision.hr_dim))), 4)
        image = self.image_tokens(4)
        ids = [65, 66, 67, 68, 69]
        a = backbone(backbone.embed_and_assemble(image, ids), x_hi)
        b = backbone(backbone.embed_and_assemble(image, ids[:-1] + [ord("Z")]), x_hi)
        numpy.testing.assert_array_equal(a.hidden.data[:-1], b.hidden.data[:-1])
        numpy.testing.assert_array_equal(a.logits.data[:-1], b.logits.data[:-1])
        self.assertFalse(np.allclose(a.hidden.data[-1], b.hidden.data[-1]))

    def test_high_resolution_contract(self):
        seq = self.backbone.embed_and_assemble(None, [65])
        x_hi = PatchTokens(Tensor(np.zeros((16, self.config.vision.hr_dim))), 4)
        with self.assertRaises(ContractError):
            self.backbone(seq, x_hi)
        fused = FusionBackbone(small_model_config(use_hrcvm=True), Rng(0))
        with self.assertRaises(ContractError):
            fused(seq)
        self.assertEqual(fused(seq, x_hi).logits.shape[0], 1)

    def test_generate_constant_logit(self):
        backbone = constant_logit_backbone(self.config, ord("x"))
        ids = backbone.generate(None, [65, 66], max_new=5)
        self.assertEqual(ids, [ord("x")] * 5)

    def test_generate_stops_at_stop_id(self):
        backbone = constant_logit_backbone(self.config, int(SpecialToken.ACT_END))
        self.assertEqual(backbone.generate(None, [65], max_new=5), [])

    def test_generate_respects_max_seq(self):
        config = small_model_config(use_hrcvm=False, max_seq=10)
        backbone = constant_logit_backbone(config, ord("y"))
        self.assertEqual(len(backbone.generate(None, [65] * 7, max_new=20)), 3)

    def test_generate_empty_prompt(self):
        with self.assertRaises(ContractError):
            self.backbone.generate(None, [])

    def test_constant_logit_out_of_range(self):
        with self.assertRaises(IndexError):
            constant_logit_backbone(self.config, self.config.vocab_size)


if __name__ == "__main__":
    unittest.main()
