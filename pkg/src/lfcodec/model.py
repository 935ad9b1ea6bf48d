"""The two-lane light-field autoencoder.

Lane one is a five-stage strided-conv encoder (each stage conv 2x2/s2,
ReLU, batch norm) that squeezes the channel-stacked field down to the
latent tensor, mirrored by five transposed-conv stages on the way back up.
Lane two is the highway: the grid-center view is copied verbatim into the
encoding and re-joined to the decoder output by channel concatenation.
A final 1x1 convolution with ReLU mixes the concatenation back to one
channel per stacked input channel.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, IncompatibleEncodingError, ShapeError
from .layers import (
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
from .lightfield import LightField, center_view, stack_views, unstack_views
from .tensor import BatchNormCache, BatchNormParams, ConvParams, Tensor, bn_params

N_STAGES = 5
DOWNSCALE = 2 ** N_STAGES


@dataclass
class ModelConfig:
    grid: tuple[int, int] = (9, 9)
    spatial: int = 512
    channel_schedule: tuple[int, ...] = (128, 256, 512, 1024, 2048)
    decoder_out_channels: int = 240
    init_seed: int = 0

    def __post_init__(self) -> None:
        self.grid = (int(self.grid[0]), int(self.grid[1]))
        self.channel_schedule = tuple(int(c) for c in self.channel_schedule)
        rows, cols = self.grid
        if rows != cols or rows < 1 or rows % 2 == 0:
            raise ConfigError(f"grid must be square with odd side, got {rows}x{cols}")
        if self.spatial <= 0 or self.spatial % DOWNSCALE != 0:
            raise ConfigError(
                f"spatial size must be a positive multiple of {DOWNSCALE}, got {self.spatial}")
        if len(self.channel_schedule) != N_STAGES:
            raise ConfigError(
                f"channel schedule needs {N_STAGES} entries, got {len(self.channel_schedule)}")
        if any(c < 1 for c in self.channel_schedule):
            raise ConfigError(f"channel schedule entries must be >= 1: {self.channel_schedule}")
        if self.decoder_out_channels + 3 != self.stacked_channels:
            raise ConfigError(
                f"decoder_out_channels + 3 must equal rows*cols*3 = {self.stacked_channels}, "
                f"got {self.decoder_out_channels} + 3")

    @property
    def stacked_channels(self) -> int:
        return self.grid[0] * self.grid[1] * 3

    @property
    def latent_channels(self) -> int:
        return self.channel_schedule[-1]

    @property
    def latent_spatial(self) -> int:
        return self.spatial // DOWNSCALE

    @property
    def center_channel(self) -> int:
        rows, cols = self.grid
        return (rows // 2 * cols + cols // 2) * 3

    def fingerprint(self) -> bytes:
        """8-byte digest pinning every field of this configuration."""
        canon = json.dumps({
            "grid": list(self.grid),
            "spatial": self.spatial,
            "channel_schedule": list(self.channel_schedule),
            "decoder_out_channels": self.decoder_out_channels,
            "init_seed": self.init_seed,
        }, sort_keys=True)
        return hashlib.sha256(canon.encode()).digest()[:8]


@dataclass
class LayerPair:
    conv: ConvParams
    bn: BatchNormParams


@dataclass
class EncodedLightField:
    """Compressed form: latent tensor, verbatim center view, config digest."""

    latent: Tensor
    center: np.ndarray
    fingerprint: bytes
    grid: tuple[int, int]

    def __post_init__(self) -> None:
        if self.latent.ndim != 4 or self.latent.shape[0] != 1:
            raise ShapeError(f"latent must have shape (1, C, h, w), got {self.latent.shape}")
        if self.center.ndim != 3 or self.center.shape[2] != 3:
            raise ShapeError(f"center view must have shape (H, W, 3), got {self.center.shape}")
        if len(self.fingerprint) != 8:
            raise ShapeError("fingerprint must be 8 bytes")
        if len(self.grid) != 2 or self.grid[0] < 1 or self.grid[1] < 1:
            raise ShapeError(f"grid must be two positive counts, got {self.grid}")


@dataclass
class _StageCache:
    x_in: Tensor
    conv_out: Tensor
    bn_cache: BatchNormCache


@dataclass
class ForwardCache:
    """Per-stage activations retained by a training-mode forward pass."""

    encoder: list[_StageCache] = field(default_factory=list)
    decoder: list[_StageCache] = field(default_factory=list)
    merge_in: Tensor | None = None
    merge_out: Tensor | None = None


class Model:
    """Parameter set plus mode flag; all math lives in module functions."""

    def __init__(self, config: ModelConfig, encoder: list[LayerPair],
                 decoder: list[LayerPair], merge: ConvParams, mode: str = "train"):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder
        self.merge = merge
        self.mode = mode

    def train(self) -> "Model":
        self.mode = "train"
        return self

    def eval(self) -> "Model":
        self.mode = "eval"
        return self

    @property
    def training(self) -> bool:
        return self.mode == "train"

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays in a fixed order (running stats excluded)."""
        out: dict[str, np.ndarray] = {}
        for lane, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(layers):
                out[f"{lane}.{i}.conv.weights"] = layer.conv.weights
                out[f"{lane}.{i}.conv.bias"] = layer.conv.bias
                out[f"{lane}.{i}.bn.gamma"] = layer.bn.gamma
                out[f"{lane}.{i}.bn.beta"] = layer.bn.beta
        out["merge.weights"] = self.merge.weights
        out["merge.bias"] = self.merge.bias
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        """All persistent arrays, running statistics included (checkpoint set)."""
        out = self.named_parameters()
        for lane, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(layers):
                out[f"{lane}.{i}.bn.running_mean"] = layer.bn.running_mean
                out[f"{lane}.{i}.bn.running_var"] = layer.bn.running_var
        return out

    def astype(self, dtype) -> "Model":
        """Deep copy with every array cast to ``dtype`` (for gradient checks)."""

        def cast_conv(p: ConvParams) -> ConvParams:
            return ConvParams(p.weights.astype(dtype), p.bias.astype(dtype), p.stride)

        def cast_bn(p: BatchNormParams) -> BatchNormParams:
            return BatchNormParams(p.gamma.astype(dtype), p.beta.astype(dtype),
                                   p.running_mean.astype(dtype), p.running_var.astype(dtype),
                                   p.epsilon, p.momentum)

        return Model(
            replace(self.config),
            [LayerPair(cast_conv(l.conv), cast_bn(l.bn)) for l in self.encoder],
            [LayerPair(cast_conv(l.conv), cast_bn(l.bn)) for l in self.decoder],
            cast_conv(self.merge),
            self.mode,
        )


def _lane_channel_plan(cfg: ModelConfig) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    sched = cfg.channel_schedule
    enc = []
    prev = cfg.stacked_channels
    for c in sched:
        enc.append((prev, c))
        prev = c
    dec = []
    prev = sched[-1]
    for c in list(reversed(sched[:-1])) + [cfg.decoder_out_channels]:
        dec.append((prev, c))
        prev = c
    return enc, dec


def build_model(cfg: ModelConfig) -> Model:
    """Fresh model: He-initialized conv weights, identity batch norms.

    Weight draws happen in a fixed layer order from a generator seeded with
    ``cfg.init_seed``, so equal seeds give bit-identical parameters.
    """
    rng = np.random.default_rng(cfg.init_seed)
    enc_plan, dec_plan = _lane_channel_plan(cfg)

    def he_conv(shape: tuple[int, ...], fan_in: int, out_ch: int, stride: int) -> ConvParams:
        std = np.sqrt(2.0 / fan_in)
        w = (rng.standard_normal(shape) * std).astype(np.float32)
        return ConvParams(w, np.zeros(out_ch, dtype=np.float32), stride)

    encoder = []
    for cin, cout in enc_plan:
        conv = he_conv((cout, cin, 2, 2), fan_in=cin * 4, out_ch=cout, stride=2)
        encoder.append(LayerPair(conv, bn_params(cout)))
    decoder = []
    for cin, cout in dec_plan:
        # Transposed layers store weights (in, out, kh, kw).
        conv = he_conv((cin, cout, 2, 2), fan_in=cin * 4, out_ch=cout, stride=2)
        decoder.append(LayerPair(conv, bn_params(cout)))
    merge_in = cfg.decoder_out_channels + 3
    merge = he_conv((cfg.stacked_channels, merge_in, 1, 1), fan_in=merge_in,
                    out_ch=cfg.stacked_channels, stride=1)
    return Model(cfg, encoder, decoder, merge)


def _encoder_lane(model: Model, x: Tensor,
                  cache: ForwardCache | None = None,
                  update_stats: bool = True) -> Tensor:
    h = x
    for layer in model.encoder:
        c = conv2d(h, layer.conv)
        r = relu(c)
        if model.training:
            y, bn_cache = batchnorm_train(r, layer.bn, update_stats=update_stats)
            if cache is not None:
                cache.encoder.append(_StageCache(x_in=h, conv_out=c, bn_cache=bn_cache))
        else:
            y = batchnorm_eval(r, layer.bn)
        h = y
    return h


def _decoder_lane(model: Model, latent: Tensor, center: Tensor,
                  cache: ForwardCache | None = None,
                  update_stats: bool = True) -> Tensor:
    g = latent
    for layer in model.decoder:
        t = conv_transpose2d(g, layer.conv)
        r = relu(t)
        if model.training:
            y, bn_cache = batchnorm_train(r, layer.bn, update_stats=update_stats)
            if cache is not None:
                cache.decoder.append(_StageCache(x_in=g, conv_out=t, bn_cache=bn_cache))
        else:
            y = batchnorm_eval(r, layer.bn)
        g = y
    cat = concat_channels(g, center)
    m = conv2d(cat, model.merge)
    if cache is not None:
        cache.merge_in = cat
        cache.merge_out = m
    return relu(m)


def net_forward(model: Model, x: Tensor, *, want_cache: bool = False,
                update_stats: bool = True) -> tuple[Tensor, ForwardCache | None]:
    """Full pass on a stacked batch (B, rows*cols*3, H, W).

    The highway slice is taken straight from the input channels, so the
    center view reaches the merge stage losslessly.
    """
    cfg = model.config
    if x.ndim != 4 or x.shape[1] != cfg.stacked_channels:
        raise ShapeError(
            f"stacked input shape {x.shape} does not match {cfg.stacked_channels} channels")
    if x.shape[2] != cfg.spatial or x.shape[3] != cfg.spatial:
        raise ShapeError(f"stacked input spatial {x.shape[2:]} != configured {cfg.spatial}")
    cache = ForwardCache() if want_cache else None
    cc = cfg.center_channel
    center = np.ascontiguousarray(x[:, cc:cc + 3])
    latent = _encoder_lane(model, x, cache, update_stats)
    y = _decoder_lane(model, latent, center, cache, update_stats)
    return y, cache


def net_backward(model: Model, cache: ForwardCache,
                 grad_out: Tensor) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every trainable parameter.

    ``grad_out`` is the loss gradient at the network output.  The highway
    carries gradient only into the merge layer's center channels; the copy
    itself has no parameters so that branch terminates there.
    """
    grads: dict[str, np.ndarray] = {}
    g = relu_backward(cache.merge_out, grad_out)
    g, grads["merge.weights"], grads["merge.bias"] = conv2d_backward(
        cache.merge_in, model.merge, g)
    g, _center_grad = split_channels(g, model.config.decoder_out_channels)

    for i in reversed(range(len(model.decoder))):
        layer, st = model.decoder[i], cache.decoder[i]
        g, grads[f"decoder.{i}.bn.gamma"], grads[f"decoder.{i}.bn.beta"] = \
            batchnorm_backward(st.bn_cache, g)
        g = relu_backward(st.conv_out, g)
        g, grads[f"decoder.{i}.conv.weights"], grads[f"decoder.{i}.conv.bias"] = \
            conv_transpose2d_backward(st.x_in, layer.conv, g)

    for i in reversed(range(len(model.encoder))):
        layer, st = model.encoder[i], cache.encoder[i]
        g, grads[f"encoder.{i}.bn.gamma"], grads[f"encoder.{i}.bn.beta"] = \
            batchnorm_backward(st.bn_cache, g)
        g = relu_backward(st.conv_out, g)
        g, grads[f"encoder.{i}.conv.weights"], grads[f"encoder.{i}.conv.bias"] = \
            conv2d_backward(st.x_in, layer.conv, g)
    return grads


def activation_signature(cache: ForwardCache) -> np.ndarray:
    """Which side of each ReLU kink the pass took, as one flat bool vector.

    Finite-difference checks compare signatures at +step and -step to
    detect (and exclude) probes that cross an activation boundary.
    """
    parts = [st.conv_out.reshape(-1) > 0 for st in cache.encoder]
    parts += [st.conv_out.reshape(-1) > 0 for st in cache.decoder]
    parts.append(cache.merge_out.reshape(-1) > 0)
    return np.concatenate(parts)


def _check_field_dims(model: Model, lf: LightField) -> None:
    cfg = model.config
    if (lf.rows, lf.cols) != cfg.grid or lf.view_size != cfg.spatial:
        raise ShapeError(
            f"light field {lf.rows}x{lf.cols} views of {lf.view_size}px does not match "
            f"configured {cfg.grid[0]}x{cfg.grid[1]} views of {cfg.spatial}px")


def encode(model: Model, lf: LightField) -> EncodedLightField:
    """Run the encoder lane; the center view rides the highway untouched."""
    _check_field_dims(model, lf)
    x = stack_views(lf)
    latent = _encoder_lane(model, x)
    return EncodedLightField(latent=latent, center=center_view(lf),
                             fingerprint=model.config.fingerprint(),
                             grid=model.config.grid)


def decode(model: Model, enc: EncodedLightField) -> LightField:
    """Run the decoder lane on an encoding produced under the same config."""
    cfg = model.config
    if enc.fingerprint != cfg.fingerprint():
        raise IncompatibleEncodingError(
            f"encoding fingerprint {enc.fingerprint.hex()} does not match "
            f"model configuration {cfg.fingerprint().hex()}")
    expected_latent = (1, cfg.latent_channels, cfg.latent_spatial, cfg.latent_spatial)
    if enc.latent.shape != expected_latent:
        raise ShapeError(f"latent shape {enc.latent.shape}, expected {expected_latent}")
    if enc.center.shape != (cfg.spatial, cfg.spatial, 3):
        raise ShapeError(f"center shape {enc.center.shape}, expected ({cfg.spatial}, {cfg.spatial}, 3)")
    center = np.ascontiguousarray(enc.center.transpose(2, 0, 1))[None]
    y = _decoder_lane(model, enc.latent, center)
    return unstack_views(y)


def forward(model: Model, lf: LightField) -> LightField:
    """decode(encode(lf)) in one fused pass over the stacked tensor."""
    _check_field_dims(model, lf)
    y, _ = net_forward(model, stack_views(lf))
    return unstack_views(y)


def compression_ratio(cfg: ModelConfig) -> float:
    """Input units divided by encoding units (latent plus center view)."""
    rows, cols = cfg.grid
    input_units = cfg.spatial * cfg.spatial * rows * cols * 3
    middle_units = (cfg.latent_channels * cfg.latent_spatial ** 2
                    + cfg.spatial * cfg.spatial * 3)
    return input_units / middle_units


def parameter_count(model: Model) -> int:
    """Total trainable scalars (weights, biases, gammas, betas)."""
    return sum(int(p.size) for p in model.named_parameters().values())


def layer_summary(model: Model) -> list[dict]:
    """Per-layer table: name, kind, weight shape, and output shape."""
    cfg = model.config
    rows = []
    spatial = cfg.spatial
    for i, layer in enumerate(model.encoder):
        spatial //= 2
        rows.append({"name": f"encoder.{i}", "kind": "conv 2x2/s2 + relu + bn",
                     "weights": layer.conv.weights.shape,
                     "output": (layer.conv.weights.shape[0], spatial, spatial)})
    for i, layer in enumerate(model.decoder):
        spatial *= 2
        rows.append({"name": f"decoder.{i}", "kind": "deconv 2x2/s2 + relu + bn",
                     "weights": layer.conv.weights.shape,
                     "output": (layer.conv.weights.shape[1], spatial, spatial)})
    rows.append({"name": "merge", "kind": "conv 1x1/s1 + relu",
                 "weights": model.merge.weights.shape,
                 "output": (cfg.stacked_channels, spatial, spatial)})
    return rows
