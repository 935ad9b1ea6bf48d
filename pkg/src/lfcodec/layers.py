"""Forward and backward passes for every layer primitive in the network.

All functions are stateless: they take the layer input, the parameter
container, and (for backwards) the upstream gradient, and return freshly
allocated arrays.  Strided windows are gathered with
``sliding_window_view`` and contracted with ``tensordot`` so the heavy
lifting is a single BLAS call; the quadruple-loop definition lives only in
the test oracles.

Computation keeps the dtype of its inputs: the pipeline runs in float32,
gradient checking casts to float64.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import BatchNormCache, BatchNormParams, ConvParams, require_4d, require_same_shape


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided view (B, C, Ho, Wo, kh, kw) of all kernel-sized patches."""
    w = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return w[:, :, ::stride, ::stride]


def conv2d_output_shape(input_shape, p: ConvParams) -> tuple[int, int, int, int]:
    b, _, h, w = input_shape
    kh, kw = p.kernel
    s = p.stride
    return (b, p.weights.shape[0], (h - kh) // s + 1, (w - kw) // s + 1)


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Valid (un-padded) strided convolution.

    out[b,o,i,j] = bias[o] + sum_{c,di,dj} x[b,c,i*s+di,j*s+dj] * W[o,c,di,dj]
    """
    require_4d(x)
    kh, kw = p.kernel
    cout, cin = p.weights.shape[0], p.weights.shape[1]
    if x.shape[1] != cin:
        raise ShapeError(
            f"conv2d: input shape {x.shape} has {x.shape[1]} channels, "
            f"weights {p.weights.shape} expect {cin}")
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ShapeError(f"conv2d: input spatial {x.shape[2:]} smaller than kernel ({kh}, {kw})")
    if p.bias.shape[0] != cout:
        raise ShapeError(f"conv2d: bias length {p.bias.shape[0]} != out channels {cout}")
    win = _windows(x, kh, kw, p.stride)
    out = np.tensordot(win, p.weights, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += p.bias.reshape(1, -1, 1, 1)
    return out


def conv2d_backward(x: np.ndarray, p: ConvParams, upstream: np.ndarray):
    """Gradients of conv2d w.r.t. input, weights and bias."""
    expected = conv2d_output_shape(x.shape, p)
    if upstream.shape != expected:
        raise ShapeError(f"conv2d_backward: upstream shape {upstream.shape}, expected {expected}")
    kh, kw = p.kernel
    s = p.stride
    _, _, ho, wo = upstream.shape

    grad_bias = upstream.sum(axis=(0, 2, 3))
    win = _windows(x, kh, kw, s)
    grad_w = np.tensordot(upstream, win, axes=([0, 2, 3], [0, 2, 3]))

    # Scatter upstream x weights back onto the strided input positions.
    t = np.tensordot(upstream, p.weights, axes=([1], [0]))  # (B, Ho, Wo, Cin, kh, kw)
    grad_x = np.zeros_like(x)
    for di in range(kh):
        for dj in range(kw):
            grad_x[:, :, di:di + (ho - 1) * s + 1:s, dj:dj + (wo - 1) * s + 1:s] += \
                t[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return grad_x, grad_w, grad_bias


def conv_transpose2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Adjoint of the matching strided convolution, plus bias.

    Requires kernel size == stride (non-overlapping blocks), which maps
    each input pixel to one kxk output block:
    out[b,o,i*s+di,j*s+dj] = bias[o] + sum_c x[b,c,i,j] * W[c,o,di,dj]
    """
    require_4d(x)
    kh, kw = p.kernel
    s = p.stride
    if kh != s or kw != s:
        raise ShapeError(f"conv_transpose2d supports kernel == stride only, got kernel ({kh}, {kw}) stride {s}")
    cin, cout = p.weights.shape[0], p.weights.shape[1]
    if x.shape[1] != cin:
        raise ShapeError(
            f"conv_transpose2d: input shape {x.shape} has {x.shape[1]} channels, "
            f"weights {p.weights.shape} expect {cin}")
    if p.bias.shape[0] != cout:
        raise ShapeError(f"conv_transpose2d: bias length {p.bias.shape[0]} != out channels {cout}")
    b, _, h, w = x.shape
    t = np.tensordot(x, p.weights, axes=([1], [0]))     # (B, h, w, Cout, kh, kw)
    out = np.ascontiguousarray(t.transpose(0, 3, 1, 4, 2, 5)).reshape(b, cout, h * s, w * s)
    out += p.bias.reshape(1, -1, 1, 1)
    return out


def conv_transpose2d_backward(x: np.ndarray, p: ConvParams, upstream: np.ndarray):
    """Gradients of conv_transpose2d w.r.t. input, weights and bias."""
    kh, kw = p.kernel
    s = p.stride
    b, _, h, w = x.shape
    cin, cout = p.weights.shape[0], p.weights.shape[1]
    expected = (b, cout, h * s, w * s)
    if upstream.shape != expected:
        raise ShapeError(f"conv_transpose2d_backward: upstream shape {upstream.shape}, expected {expected}")

    grad_bias = upstream.sum(axis=(0, 2, 3))
    blocks = upstream.reshape(b, cout, h, s, w, s)
    # grad_W[c,o,di,dj] = sum_{b,i,j} x[b,c,i,j] * up[b,o,i*s+di,j*s+dj]
    grad_w = np.tensordot(x, blocks, axes=([0, 2, 3], [0, 2, 4]))
    # grad_x[b,c,i,j] = sum_{o,di,dj} up[b,o,i*s+di,j*s+dj] * W[c,o,di,dj]
    grad_x = np.tensordot(blocks, p.weights, axes=([1, 3, 5], [1, 2, 3]))
    grad_x = np.ascontiguousarray(grad_x.transpose(0, 3, 1, 2))
    return grad_x, grad_w, grad_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # Derivative at exactly 0 is defined as 0.
    require_same_shape(x, upstream, "relu_backward")
    return np.where(x > 0, upstream, 0)


def _check_bn_channels(x: np.ndarray, p: BatchNormParams) -> None:
    require_4d(x)
    if x.shape[1] != p.channels:
        raise ShapeError(
            f"batchnorm: input shape {x.shape} has {x.shape[1]} channels, params expect {p.channels}")


def batchnorm_train(x: np.ndarray, p: BatchNormParams,
                    update_stats: bool = True) -> tuple[np.ndarray, BatchNormCache]:
    """Normalize per channel over (batch, height, width) with batch statistics.

    Running statistics are folded in by exponential moving average with
    ``p.momentum`` (biased variance, matching the normalization itself)
    unless ``update_stats`` is False.
    """
    _check_bn_channels(x, p)
    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + np.asarray(p.epsilon, dtype=x.dtype))
    x_hat = (x - mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
    y = p.gamma.reshape(1, -1, 1, 1) * x_hat + p.beta.reshape(1, -1, 1, 1)
    if update_stats:
        m = p.momentum
        p.running_mean *= 1.0 - m
        p.running_mean += m * mean.astype(p.running_mean.dtype)
        p.running_var *= 1.0 - m
        p.running_var += m * var.astype(p.running_var.dtype)
    return y, BatchNormCache(x_hat=x_hat, inv_std=inv_std, gamma=p.gamma, count=count)


def batchnorm_eval(x: np.ndarray, p: BatchNormParams) -> np.ndarray:
    """Normalize with the stored running statistics only (no state change)."""
    _check_bn_channels(x, p)
    inv_std = 1.0 / np.sqrt(p.running_var + np.asarray(p.epsilon, dtype=x.dtype))
    scale = (p.gamma * inv_std).reshape(1, -1, 1, 1)
    shift = (p.beta - p.gamma * p.running_mean * inv_std).reshape(1, -1, 1, 1)
    return x * scale + shift


def batchnorm_backward(cache: BatchNormCache, upstream: np.ndarray):
    """Gradients of the training-mode forward w.r.t. input, gamma and beta."""
    require_same_shape(cache.x_hat, upstream, "batchnorm_backward")
    axes = (0, 2, 3)
    n = cache.count
    grad_beta = upstream.sum(axis=axes)
    grad_gamma = (upstream * cache.x_hat).sum(axis=axes)
    coeff = (cache.gamma * cache.inv_std / n).reshape(1, -1, 1, 1)
    grad_x = coeff * (
        n * upstream
        - grad_beta.reshape(1, -1, 1, 1)
        - cache.x_hat * grad_gamma.reshape(1, -1, 1, 1)
    )
    return grad_x, grad_gamma, grad_beta


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack b's channels after a's; batch and spatial dims must agree."""
    require_4d(a, "first operand")
    require_4d(b, "second operand")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels: shapes {a.shape} and {b.shape} differ outside the channel axis")
    return np.concatenate([a, b], axis=1)


def split_channels(x: np.ndarray, first: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of concat_channels at the given split point."""
    require_4d(x)
    if not 0 <= first <= x.shape[1]:
        raise ShapeError(f"split_channels: split {first} outside channel range of shape {x.shape}")
    return x[:, :first].copy(), x[:, first:].copy()
