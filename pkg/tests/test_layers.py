"""Layer forwards against independent oracles, identity semantics, grads."""

import math

import numpy as np
import pytest

from admn import autodiff as ad
from admn.autodiff import Tensor
from admn.errors import ConfigError, DimensionError
from admn.layers import ConvLayerParams, TransformerLayerParams, add_positional, \
    conv2d_forward, mha_forward, patch_embed, sinusoidal_positions, \
    transformer_layer_forward
from admn.rng import RngState


def oracle_attention(x, p):
    """Step-by-step reference attention; returns (output, per-head probs)."""
    q, k, v = x @ p.wq.data, x @ p.wk.data, x @ p.wv.data
    dh = p.dim // p.heads
    outs, probs = [], []
    for h in range(p.heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        a = e / e.sum(axis=-1, keepdims=True)
        probs.append(a)
        outs.append(a @ v[:, sl])
    return np.concatenate(outs, axis=-1) @ p.wo.data, probs


class TestMha:
    def test_single_token_is_value_output_projection(self):
        p = TransformerLayerParams.init(RngState(1), 8, 2)
        x = RngState(2).normal((1, 8))
        out = mha_forward(Tensor(x), p)
        expected = (x @ p.wv.data) @ p.wo.data  # attention weight is [1]
        assert np.allclose(out.data, expected, atol=1e-12)

    def test_identical_tokens_give_identical_rows(self):
        p = TransformerLayerParams.init(RngState(3), 8, 2)
        x = np.tile(RngState(4).normal((1, 8)), (5, 1))
        out = mha_forward(Tensor(x), p).data
        assert np.allclose(out, out[0], atol=1e-12)

    def test_matches_stepwise_oracle(self):
        p = TransformerLayerParams.init(RngState(5), 8, 2)
        x = RngState(6).normal((3, 8))
        out = mha_forward(Tensor(x), p)
        expected, probs = oracle_attention(x, p)
        assert np.abs(out.data - expected).max() < 1e-10
        for a in probs:  # attention rows are probability vectors
            assert np.abs(a.sum(axis=-1) - 1.0).max() < 1e-12

    def test_batched_matches_unbatched(self):
        p = TransformerLayerParams.init(RngState(7), 8, 4)
        xs = RngState(8).normal((3, 5, 8))
        batched = mha_forward(Tensor(xs), p).data
        for i in range(3):
            single = mha_forward(Tensor(xs[i]), p).data
            assert np.allclose(batched[i], single, atol=1e-12)

    def test_heads_must_divide_dim(self):
        with pytest.raises(ConfigError):
            TransformerLayerParams.init(RngState(9), 8, 3)


class TestTransformerLayer:
    def test_inactive_is_bit_identical_identity(self):
        p = TransformerLayerParams.init(RngState(10), 8, 2)
        x = Tensor(RngState(11).normal((4, 8)))
        out = transformer_layer_forward(x, p, False)
        assert out is x

    def test_zero_weights_residual_only(self):
        p = TransformerLayerParams.init(RngState(12), 8, 2)
        for w in (p.wq, p.wk, p.wv, p.wo, p.w_up, p.w_down):
            w.data[:] = 0.0
        x = RngState(13).normal((4, 8))
        out = transformer_layer_forward(Tensor(x), p, True)
        assert np.allclose(out.data, x, atol=1e-12)

    def test_matches_composition_oracle(self):
        p = TransformerLayerParams.init(RngState(14), 8, 2)
        x = RngState(15).normal((3, 8))

        def ln(v, gain, bias):
            mu = v.mean(axis=-1, keepdims=True)
            var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
            return (v - mu) / np.sqrt(var + 1e-5) * gain + bias

        h = x + oracle_attention(ln(x, p.ln1_gain.data, p.ln1_bias.data), p)[0]
        normed = ln(h, p.ln2_gain.data, p.ln2_bias.data)
        gelu = lambda t: 0.5 * t * (1.0 + np.vectorize(math.erf)(t / math.sqrt(2)))
        expected = h + gelu(normed @ p.w_up.data) @ p.w_down.data
        out = transformer_layer_forward(Tensor(x), p, True)
        assert np.abs(out.data - expected).max() < 1e-10

    def test_scalar_gate_zero_is_identity(self):
        p = TransformerLayerParams.init(RngState(16), 8, 2)
        x = Tensor(RngState(17).normal((2, 4, 8)))
        gate = Tensor(np.zeros((2, 1, 1)))
        out = transformer_layer_forward(x, p, gate)
        assert np.array_equal(out.data, x.data)

    def test_scalar_gate_one_matches_active(self):
        p = TransformerLayerParams.init(RngState(18), 8, 2)
        x = Tensor(RngState(19).normal((2, 4, 8)))
        gate = Tensor(np.ones((2, 1, 1)))
        gated = transformer_layer_forward(x, p, gate)
        active = transformer_layer_forward(x, p, True)
        assert np.allclose(gated.data, active.data, atol=1e-14)


class TestPatchEmbed:
    def test_whole_image_single_token(self):
        proj = Tensor(np.eye(256)[:, :8])
        out = patch_embed(Tensor(RngState(20).normal((1, 16, 16))), 16, proj)
        assert out.shape == (1, 8)

    def test_token_count(self):
        proj = Tensor(RngState(21).normal((16, 8)))
        out = patch_embed(Tensor(RngState(22).normal((1, 16, 16))), 4, proj)
        assert out.shape == (16, 8)

    def test_zero_image_tokens_equal_positions(self):
        proj = Tensor(RngState(23).normal((16, 8)))
        tokens = add_positional(patch_embed(Tensor(np.zeros((1, 16, 16))), 4, proj))
        assert np.array_equal(tokens.data, sinusoidal_positions(16, 8))

    def test_non_divisible_patch_rejected(self):
        proj = Tensor(np.zeros((9, 4)))
        with pytest.raises(ConfigError):
            patch_embed(Tensor(np.zeros((1, 16, 16))), 3, proj)

    def test_patch_pixel_order(self):
        # token j holds patch (row-major) with channel-major pixels
        img = np.arange(16.0).reshape(1, 4, 4)
        out = patch_embed(Tensor(img), 2, Tensor(np.eye(4)))
        assert out.data[0].tolist() == [0.0, 1.0, 4.0, 5.0]
        assert out.data[3].tolist() == [10.0, 11.0, 14.0, 15.0]


def oracle_conv(x, weight, bias, stride):
    co, ci, k, _ = weight.shape
    _, height, width = x.shape
    oh = (height - k) // stride + 1
    ow = (width - k) // stride + 1
    out = np.zeros((co, oh, ow))
    for o in range(co):
        for oy in range(oh):
            for ox in range(ow):
                acc = 0.0
                for c in range(ci):
                    for ky in range(k):
                        for kx in range(k):
                            acc += x[c, oy * stride + ky, ox * stride + kx] \
                                * weight[o, c, ky, kx]
                out[o, oy, ox] = acc + bias[o]
    return out


class TestConv2d:
    def test_one_by_one_identity(self):
        p = ConvLayerParams.init(RngState(24), 1, 1, 1)
        p.weight.data[:] = 1.0
        p.bias.data[:] = 0.0
        x = RngState(25).normal((1, 5, 5))
        assert np.allclose(conv2d_forward(Tensor(x), p).data, x, atol=1e-15)

    def test_all_ones_field(self):
        p = ConvLayerParams.init(RngState(26), 3, 1, 1)
        p.weight.data[:] = 1.0
        p.bias.data[:] = 0.0
        out = conv2d_forward(Tensor(np.ones((1, 4, 4))), p)
        assert np.allclose(out.data, 9.0)

    def test_matches_quadruple_loop_oracle(self):
        rng = RngState(27)
        p = ConvLayerParams.init(rng, 3, 2, 3, stride=2)
        x = rng.normal((2, 7, 9))
        out = conv2d_forward(Tensor(x), p)
        expected = oracle_conv(x, p.weight.data, p.bias.data, 2)
        assert np.abs(out.data - expected).max() < 1e-12

    def test_undersized_input_rejected(self):
        p = ConvLayerParams.init(RngState(28), 5, 1, 1)
        with pytest.raises(DimensionError):
            conv2d_forward(Tensor(np.zeros((1, 3, 3))), p)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            ConvLayerParams.init(RngState(29), 4, 1, 1)


class TestLayerGradients:
    """All layer forwards pass grad_check at tol 1e-4."""

    def test_mha_input_gradient(self):
        p = TransformerLayerParams.init(RngState(30), 8, 2)
        fn = lambda x: ad.tsum(mha_forward(x, p) ** 2.0)
        assert ad.grad_check(fn, Tensor(RngState(31).normal((3, 8)))).passed

    def test_transformer_layer_input_gradient(self):
        p = TransformerLayerParams.init(RngState(32), 8, 2)
        fn = lambda x: ad.tsum(transformer_layer_forward(x, p, True) ** 2.0)
        assert ad.grad_check(fn, Tensor(RngState(33).normal((2, 8)))).passed

    def test_transformer_layer_weight_gradient(self):
        p = TransformerLayerParams.init(RngState(34), 8, 2)
        x = Tensor(RngState(35).normal((2, 8)))

        def fn(w):
            p.w_up.data = w.data
            saved = p.w_up
            p.w_up = w
            out = ad.tsum(transformer_layer_forward(x, p, True) ** 2.0)
            p.w_up = saved
            return out

        assert ad.grad_check(fn, Tensor(p.w_up.data.copy())).passed

    def test_conv_input_gradient(self):
        p = ConvLayerParams.init(RngState(36), 3, 1, 2)
        fn = lambda x: ad.tsum(conv2d_forward(x, p) ** 2.0)
        assert ad.grad_check(fn, Tensor(RngState(37).normal((1, 5, 5)))).passed

    def test_patch_embed_gradient(self):
        proj = Tensor(RngState(38).normal((4, 6)))
        fn = lambda x: ad.tsum(patch_embed(x, 2, proj) ** 2.0)
        assert ad.grad_check(fn, Tensor(RngState(39).normal((1, 4, 4)))).passed
