"""Layer primitives against brute-force oracles and finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfcodec import (
    BatchNormParams,
    ConvParams,
    ShapeError,
    batchnorm_backward,
    batchnorm_eval,
    batchnorm_train,
    concat_channels,
    conv2d,
    conv2d_backward,
    conv_transpose2d,
    conv_transpose2d_backward,
    relu,
    relu_backward,
    split_channels,
)
from lfcodec.tensor import bn_params


def conv2d_loop_oracle(x, w, b, stride):
    """Direct quadruple-nested-loop convolution, the independent reference."""
    bs, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = (h - kh) // stride + 1
    wo = (wd - kw) // stride + 1
    out = np.zeros((bs, cout, ho, wo), dtype=np.float64)
    for n in range(bs):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = b[o].item()
                    for c in range(cin):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += x[n, c, i * stride + di, j * stride + dj] * w[o, c, di, dj]
                    out[n, o, i, j] = acc
    return out


class TestConv2d:
    def test_all_ones_2x2(self):
        """Sum of four ones through an all-ones 2x2 filter is 4."""
        p = ConvParams(np.ones((1, 1, 2, 2)), np.zeros(1), 2)
        out = conv2d(np.ones((1, 1, 2, 2)), p)
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 4.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 4, 4))
        w = rng.standard_normal((3, 2, 2, 2))
        b = rng.standard_normal(3)
        got = conv2d(x, ConvParams(w, b, 2))
        want = conv2d_loop_oracle(x, w, b, 2)
        assert np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-30)) < 1e-12

    def test_five_stride2_halvings_reach_16(self):
        """512px shrinks to 16px across five stride-2 stages."""
        x = np.zeros((1, 1, 512, 512), dtype=np.float32)
        p = ConvParams(np.ones((1, 1, 2, 2), dtype=np.float32), np.zeros(1, dtype=np.float32), 2)
        for _ in range(5):
            x = conv2d(x, p)
        assert x.shape[2:] == (16, 16)

    def test_channel_mismatch_reports_both_shapes(self):
        p = ConvParams(np.ones((1, 3, 2, 2)), np.zeros(1), 2)
        with pytest.raises(ShapeError) as exc:
            conv2d(np.ones((1, 2, 4, 4)), p)
        assert "(1, 2, 4, 4)" in str(exc.value) and "(1, 3, 2, 2)" in str(exc.value)

    def test_input_smaller_than_kernel_rejected(self):
        p = ConvParams(np.ones((1, 1, 2, 2)), np.zeros(1), 2)
        with pytest.raises(ShapeError):
            conv2d(np.ones((1, 1, 1, 1)), p)

    @settings(max_examples=60, deadline=None)
    @given(
        data=st.data(),
        batch=st.integers(1, 2),
        cin=st.integers(1, 3),
        cout=st.integers(1, 3),
        kernel=st.integers(1, 2),
        stride=st.integers(1, 2),
        h=st.integers(2, 8),
        w=st.integers(2, 8),
    )
    def test_matches_oracle_on_all_small_dims(self, data, batch, cin, cout, kernel, stride, h, w):
        """Exhaustive-style property: im2col path == loop oracle for dims <= 8."""
        seed = data.draw(st.integers(0, 2**31 - 1))
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((batch, cin, h, w))
        wt = rng.standard_normal((cout, cin, kernel, kernel))
        b = rng.standard_normal(cout)
        got = conv2d(x, ConvParams(wt, b, stride))
        want = conv2d_loop_oracle(x, wt, b, stride)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 6, 6))
        p = ConvParams(rng.standard_normal((4, 3, 2, 2)), rng.standard_normal(4), 2)
        assert np.array_equal(conv2d(x, p), conv2d(x, p))


class TestConv2dBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 2, 4, 4))
        p = ConvParams(rng.standard_normal((3, 2, 2, 2)), rng.standard_normal(3), 2)
        gx, gw, gb = conv2d_backward(x, p, np.zeros((2, 3, 2, 2)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_grad_bias_is_upstream_sum(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 2, 4, 4))
        p = ConvParams(rng.standard_normal((3, 2, 2, 2)), rng.standard_normal(3), 2)
        up = rng.standard_normal((2, 3, 2, 2))
        _, _, gb = conv2d_backward(x, p, up)
        np.testing.assert_allclose(gb, up.sum(axis=(0, 2, 3)), rtol=1e-12)

    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((1, 2, 4, 4))
        w = rng.standard_normal((2, 2, 2, 2))
        b = rng.standard_normal(2)
        up = rng.standard_normal((1, 2, 2, 2))
        p = ConvParams(w, b, 2)
        gx, gw, gb = conv2d_backward(x, p, up)
        step = 1e-5
        for arr, grad in ((x, gx), (w, gw), (b, gb)):
            flat, gflat = arr.reshape(-1), grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = np.sum(conv2d(x, p) * up)
                flat[i] = orig - step
                lm = np.sum(conv2d(x, p) * up)
                flat[i] = orig
                fd = (lp - lm) / (2 * step)
                assert abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6) < 1e-4

    def test_upstream_shape_mismatch_rejected(self):
        p = ConvParams(np.ones((1, 1, 2, 2)), np.zeros(1), 2)
        with pytest.raises(ShapeError):
            conv2d_backward(np.ones((1, 1, 4, 4)), p, np.ones((1, 1, 3, 3)))


class TestConvTranspose2d:
    def test_single_pixel_broadcasts_to_block(self):
        """A lone input value paints the whole 2x2 block through a ones filter."""
        p = ConvParams(np.ones((1, 1, 2, 2)), np.zeros(1), 2)
        out = conv_transpose2d(np.full((1, 1, 1, 1), 3.5), p)
        assert out.shape == (1, 1, 2, 2)
        assert np.all(out == 3.5)

    def test_five_upsamplings_recover_512(self):
        x = np.zeros((1, 1, 16, 16), dtype=np.float32)
        p = ConvParams(np.ones((1, 1, 2, 2), dtype=np.float32), np.zeros(1, dtype=np.float32), 2)
        for _ in range(5):
            x = conv_transpose2d(x, p)
        assert x.shape[2:] == (512, 512)

    def test_adjoint_identity(self):
        """<conv(x), y> == <x, conv_t(y)> with shared weights and zero bias."""
        for seed in range(30):
            rng = np.random.default_rng(seed)
            cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            h = int(rng.integers(1, 5)) * 2
            x = rng.standard_normal((2, cin, h, h))
            w = rng.standard_normal((cout, cin, 2, 2))
            y = rng.standard_normal((2, cout, h // 2, h // 2))
            lhs = float(np.sum(conv2d(x, ConvParams(w, np.zeros(cout), 2)) * y))
            rhs = float(np.sum(x * conv_transpose2d(y, ConvParams(w, np.zeros(cin), 2))))
            assert abs(lhs - rhs) / max(abs(lhs), abs(rhs)) < 1e-10

    def test_kernel_stride_mismatch_rejected(self):
        p = ConvParams(np.ones((1, 1, 2, 2)), np.zeros(1), 1)
        with pytest.raises(ShapeError):
            conv_transpose2d(np.ones((1, 1, 2, 2)), p)

    def test_spatial_roundtrip_preserves_dims(self):
        """conv then transpose with k=s=2 maps H -> H/2 -> H for even H."""
        for h in (2, 4, 6, 10, 16):
            rng = np.random.default_rng(h)
            x = rng.standard_normal((1, 2, h, h))
            down = conv2d(x, ConvParams(rng.standard_normal((3, 2, 2, 2)), np.zeros(3), 2))
            assert down.shape[2:] == (h // 2, h // 2)
            up = conv_transpose2d(down, ConvParams(rng.standard_normal((3, 2, 2, 2)), np.zeros(2), 2))
            assert up.shape[2:] == (h, h)


class TestConvTranspose2dBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 3, 2, 2))
        p = ConvParams(rng.standard_normal((3, 2, 2, 2)), rng.standard_normal(2), 2)
        gx, gw, gb = conv_transpose2d_backward(x, p, np.zeros((1, 2, 4, 4)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_finite_differences(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((1, 2, 3, 3))
        w = rng.standard_normal((2, 3, 2, 2))
        b = rng.standard_normal(3)
        up = rng.standard_normal((1, 3, 6, 6))
        p = ConvParams(w, b, 2)
        gx, gw, gb = conv_transpose2d_backward(x, p, up)
        step = 1e-5
        for arr, grad in ((x, gx), (w, gw), (b, gb)):
            flat, gflat = arr.reshape(-1), grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = np.sum(conv_transpose2d(x, p) * up)
                flat[i] = orig - step
                lm = np.sum(conv_transpose2d(x, p) * up)
                flat[i] = orig
                fd = (lp - lm) / (2 * step)
                assert abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6) < 1e-4

    def test_grad_input_equals_conv_forward_of_upstream(self):
        """Adjoint symmetry: d(transpose)/d(input) applies the conv direction."""
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 3, 3, 3))
        w = rng.standard_normal((3, 2, 2, 2))
        p = ConvParams(w, np.zeros(2), 2)
        up = rng.standard_normal((2, 2, 6, 6))
        gx, _, _ = conv_transpose2d_backward(x, p, up)
        oracle = conv2d(up, ConvParams(w, np.zeros(3), 2))
        np.testing.assert_allclose(gx, oracle, rtol=1e-12, atol=1e-12)


class TestRelu:
    def test_clamps_negatives(self):
        x = np.array([[[[-1.0, 0.0, 2.0]]]])
        np.testing.assert_array_equal(relu(x), [[[[0.0, 0.0, 2.0]]]])

    def test_identity_on_nonnegative(self):
        x = np.abs(np.random.default_rng(0).standard_normal((2, 2, 3, 3)))
        assert np.array_equal(relu(x), x)

    def test_backward_zero_at_kink(self):
        x = np.array([[[[-1.0, 0.0, 2.0]]]])
        up = np.ones_like(x)
        np.testing.assert_array_equal(relu_backward(x, up), [[[[0.0, 0.0, 1.0]]]])

    def test_finite_differences_away_from_kink(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((2, 2, 4, 4))
        x = x[np.abs(x) > 1e-3].reshape(1, 1, 1, -1)  # exclude kink neighborhood
        up = rng.standard_normal(x.shape)
        grad = relu_backward(x, up)
        step = 1e-6
        fd = (np.sum(relu(x + step) * up) - np.sum(relu(x - step) * up)) / (2 * step)
        assert abs(fd - grad.sum()) / max(abs(fd), abs(grad.sum())) < 1e-6


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        """gamma=1, beta=0: per-channel mean ~0 and variance ~1."""
        rng = np.random.default_rng(9)
        x = rng.standard_normal((4, 3, 8, 8)) * 2.5 + 1.0
        y, _ = batchnorm_train(x, bn_params(3, dtype=np.float64))
        for c in range(3):
            assert abs(y[:, c].mean()) < 1e-6
            assert abs(y[:, c].var() - 1.0) < 1e-4

    def test_constant_channel_maps_to_zero(self):
        x = np.full((2, 2, 4, 4), 7.0)
        y, _ = batchnorm_train(x, bn_params(2, dtype=np.float64))
        assert np.all(y == 0.0)

    def test_running_stats_updated_by_ema(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((4, 2, 4, 4)) + 3.0
        p = bn_params(2, dtype=np.float64)
        batchnorm_train(x, p)
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        np.testing.assert_allclose(p.running_mean, 0.1 * mean, rtol=1e-12)
        np.testing.assert_allclose(p.running_var, 0.9 + 0.1 * var, rtol=1e-12)

    def test_update_stats_flag_freezes_running_stats(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 2, 4, 4))
        p = bn_params(2, dtype=np.float64)
        batchnorm_train(x, p, update_stats=False)
        assert np.all(p.running_mean == 0.0) and np.all(p.running_var == 1.0)

    def test_eval_uses_running_stats_only(self):
        rng = np.random.default_rng(12)
        p = bn_params(2, dtype=np.float64)
        p.running_mean[:] = (1.0, -1.0)
        p.running_var[:] = (4.0, 0.25)
        x = rng.standard_normal((2, 2, 3, 3))
        y = batchnorm_eval(x, p)
        want = (x - p.running_mean.reshape(1, -1, 1, 1)) / np.sqrt(
            (p.running_var + p.epsilon).reshape(1, -1, 1, 1))
        np.testing.assert_allclose(y, want, rtol=1e-12)

    def test_backward_finite_differences(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((3, 2, 3, 3))
        gamma = rng.standard_normal(2) + 1.5
        beta = rng.standard_normal(2)
        up = rng.standard_normal(x.shape)

        def forward(xv, gv, bv):
            p = BatchNormParams(gv, bv, np.zeros(2), np.ones(2))
            return batchnorm_train(xv, p, update_stats=False)[0]

        p = BatchNormParams(gamma, beta, np.zeros(2), np.ones(2))
        _, cache = batchnorm_train(x, p, update_stats=False)
        gx, gg, gb = batchnorm_backward(cache, up)
        step = 1e-5
        for arr, grad in ((x, gx), (gamma, gg), (beta, gb)):
            flat, gflat = arr.reshape(-1), grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = np.sum(forward(x, gamma, beta) * up)
                flat[i] = orig - step
                lm = np.sum(forward(x, gamma, beta) * up)
                flat[i] = orig
                fd = (lp - lm) / (2 * step)
                assert abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6) < 1e-4

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            batchnorm_train(np.ones((1, 3, 2, 2)), bn_params(2))


class TestConcatChannels:
    def test_concat_then_split_is_identity(self):
        rng = np.random.default_rng(14)
        a = rng.standard_normal((2, 5, 4, 4))
        b = rng.standard_normal((2, 3, 4, 4))
        cat = concat_channels(a, b)
        a2, b2 = split_channels(cat, 5)
        assert np.array_equal(a, a2) and np.array_equal(b, b2)

    def test_240_plus_3_gives_243(self):
        a = np.zeros((1, 240, 2, 2))
        b = np.ones((1, 3, 2, 2))
        assert concat_channels(a, b).shape[1] == 243

    def test_leading_channels_come_from_first_operand(self):
        rng = np.random.default_rng(15)
        a = rng.standard_normal((1, 4, 3, 3))
        b = rng.standard_normal((1, 2, 3, 3))
        cat = concat_channels(a, b)
        for c in range(4):
            assert np.array_equal(cat[:, c], a[:, c])

    def test_spatial_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            concat_channels(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))

    def test_batch_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            concat_channels(np.ones((1, 1, 2, 2)), np.ones((2, 1, 2, 2)))
