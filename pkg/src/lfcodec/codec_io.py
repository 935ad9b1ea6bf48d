"""Bit-exact binary serialization of encoded light fields and checkpoints.

Both containers are little-endian throughout and store every numeric array
as raw IEEE-754 single precision, so read(write(x)) reproduces x to the
bit on any platform.

``.lfae`` (encoded light field)::

    magic "LFAE" | version u16 | rows u8 | cols u8 | spatial u32
    | latent_channels u32 | latent_spatial u32 | fingerprint 8B
    | latent float32[1, C, h, h] | center float32[H, W, 3]

``.lfck`` (checkpoint)::

    magic "LFCK" | version u16 | flags u8 (bit 0: optimizer state present)
    | config_len u32 | config JSON | manifest_len u32 | manifest JSON
    | payload (concatenated float32 arrays at the manifest offsets)
"""
from __future__ import annotations

import json
import struct
from contextlib import contextmanager
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import ConfigError, CorruptedFileError, UnsupportedFormatError
from .model import EncodedLightField, Model, ModelConfig, build_model
from .train import AdamState

ENCODED_MAGIC = b"LFAE"
CHECKPOINT_MAGIC = b"LFCK"
FORMAT_VERSION = 1
_ENC_HEADER = struct.Struct("<4sHBBIII8s")
_CKPT_HEADER = struct.Struct("<4sHB")
_U32 = struct.Struct("<I")


@contextmanager
def _writable(sink: Path | str | BinaryIO):
    if hasattr(sink, "write"):
        yield sink
    else:
        with open(sink, "wb") as f:
            yield f


@contextmanager
def _readable(source: Path | str | BinaryIO):
    if hasattr(source, "read"):
        yield source
    else:
        with open(source, "rb") as f:
            yield f


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CorruptedFileError(f"truncated {what}: expected {n} bytes, got {len(data)}")
    return data


def _expect_eof(f: BinaryIO) -> None:
    extra = f.read(1)
    if extra:
        raise CorruptedFileError("trailing bytes after declared payload")


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _f32_from(data: bytes, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float32)


def write_encoded(enc: EncodedLightField, sink: Path | str | BinaryIO) -> int:
    """Serialize an encoded field; returns the number of bytes written."""
    spatial = enc.center.shape[0]
    header = _ENC_HEADER.pack(ENCODED_MAGIC, FORMAT_VERSION, enc.grid[0], enc.grid[1],
                              spatial, enc.latent.shape[1], enc.latent.shape[2],
                              enc.fingerprint)
    latent = _f32_bytes(enc.latent)
    center = _f32_bytes(enc.center)
    with _writable(sink) as f:
        f.write(header)
        f.write(latent)
        f.write(center)
    return len(header) + len(latent) + len(center)


def read_encoded(source: Path | str | BinaryIO) -> EncodedLightField:
    with _readable(source) as f:
        raw = _read_exact(f, _ENC_HEADER.size, "header")
        magic, version, rows, cols, spatial, lat_ch, lat_sp, fingerprint = \
            _ENC_HEADER.unpack(raw)
        if magic != ENCODED_MAGIC:
            raise UnsupportedFormatError(f"bad magic {magic!r}, expected {ENCODED_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise UnsupportedFormatError(f"unsupported format version {version}")
        if rows < 1 or cols < 1 or spatial < 1 or lat_ch < 1:
            raise CorruptedFileError(f"nonsensical header dims rows={rows} cols={cols} "
                                     f"spatial={spatial} latent_channels={lat_ch}")
        if lat_sp != spatial // 32:
            raise CorruptedFileError(
                f"inconsistent header: latent spatial {lat_sp} != spatial/32 = {spatial // 32}")
        latent_bytes = lat_ch * lat_sp * lat_sp * 4
        center_bytes = spatial * spatial * 3 * 4
        latent = _f32_from(_read_exact(f, latent_bytes, "latent payload"),
                           (1, lat_ch, lat_sp, lat_sp))
        center = _f32_from(_read_exact(f, center_bytes, "center payload"),
                           (spatial, spatial, 3))
        _expect_eof(f)
    return EncodedLightField(latent=latent, center=center, fingerprint=fingerprint,
                             grid=(rows, cols))


def encoded_size_bytes(cfg: ModelConfig) -> int:
    """On-disk size of one encoded field under this configuration."""
    payload = (cfg.latent_channels * cfg.latent_spatial ** 2
               + cfg.spatial * cfg.spatial * 3) * 4
    return _ENC_HEADER.size + payload


def _config_json(cfg: ModelConfig) -> bytes:
    return json.dumps({
        "grid": list(cfg.grid),
        "spatial": cfg.spatial,
        "channel_schedule": list(cfg.channel_schedule),
        "decoder_out_channels": cfg.decoder_out_channels,
        "init_seed": cfg.init_seed,
    }, sort_keys=True).encode()


def _config_from_json(data: bytes) -> ModelConfig:
    try:
        d = json.loads(data.decode())
        return ModelConfig(grid=tuple(d["grid"]), spatial=d["spatial"],
                           channel_schedule=tuple(d["channel_schedule"]),
                           decoder_out_channels=d["decoder_out_channels"],
                           init_seed=d["init_seed"])
    except (ValueError, KeyError, TypeError, ConfigError) as e:
        raise CorruptedFileError(f"invalid checkpoint configuration: {e}") from e


def write_checkpoint(model: Model, state: AdamState | None,
                     sink: Path | str | BinaryIO) -> int:
    """Serialize parameters, running stats, and (optionally) optimizer state."""
    arrays = dict(model.named_arrays())
    adam_t = 0
    if state is not None:
        adam_t = state.t
        for name, arr in state.m.items():
            arrays[f"adam.m.{name}"] = arr
        for name, arr in state.v.items():
            arrays[f"adam.v.{name}"] = arr

    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        blob = _f32_bytes(arr)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps({"adam_t": adam_t, "payload_bytes": offset,
                           "entries": entries}).encode()
    config = _config_json(model.config)
    flags = 1 if state is not None else 0

    written = 0
    with _writable(sink) as f:
        for chunk in (_CKPT_HEADER.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, flags),
                      _U32.pack(len(config)), config,
                      _U32.pack(len(manifest)), manifest, *blobs):
            f.write(chunk)
            written += len(chunk)
    return written


def _validate_manifest(entries: list[dict], expected: dict[str, tuple[int, ...]],
                       payload_bytes: int) -> None:
    names = [e["name"] for e in entries]
    if len(set(names)) != len(names):
        raise CorruptedFileError("manifest contains duplicate parameter names")
    missing = set(expected) - set(names)
    unknown = set(names) - set(expected)
    if missing or unknown:
        raise CorruptedFileError(
            f"manifest parameter set mismatch: missing {sorted(missing)}, "
            f"unknown {sorted(unknown)}")
    spans = []
    for e in entries:
        shape = tuple(e["shape"])
        if shape != expected[e["name"]]:
            raise CorruptedFileError(
                f"manifest shape for {e['name']} is {shape}, expected {expected[e['name']]}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        off = e["offset"]
        if off < 0 or off + nbytes > payload_bytes:
            raise CorruptedFileError(
                f"manifest entry {e['name']} spans [{off}, {off + nbytes}) "
                f"outside payload of {payload_bytes} bytes")
        spans.append((off, off + nbytes))
    spans.sort()
    for (_, end_a), (start_b, _) in zip(spans, spans[1:]):
        if start_b < end_a:
            raise CorruptedFileError("manifest entries overlap")


def read_checkpoint(source: Path | str | BinaryIO) -> tuple[Model, AdamState | None]:
    """Rebuild the model (in eval mode) and optimizer state if present."""
    with _readable(source) as f:
        raw = _read_exact(f, _CKPT_HEADER.size, "header")
        magic, version, flags = _CKPT_HEADER.unpack(raw)
        if magic != CHECKPOINT_MAGIC:
            raise UnsupportedFormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise UnsupportedFormatError(f"unsupported format version {version}")
        config_len = _U32.unpack(_read_exact(f, 4, "config length"))[0]
        cfg = _config_from_json(_read_exact(f, config_len, "config"))
        manifest_len = _U32.unpack(_read_exact(f, 4, "manifest length"))[0]
        try:
            manifest = json.loads(_read_exact(f, manifest_len, "manifest").decode())
            entries = manifest["entries"]
            payload_bytes = int(manifest["payload_bytes"])
            adam_t = int(manifest["adam_t"])
        except (ValueError, KeyError, TypeError) as e:
            raise CorruptedFileError(f"invalid checkpoint manifest: {e}") from e

        model = build_model(cfg)
        expected = {name: arr.shape for name, arr in model.named_arrays().items()}
        has_optimizer = bool(flags & 1)
        if has_optimizer:
            for name, arr in model.named_parameters().items():
                expected[f"adam.m.{name}"] = arr.shape
                expected[f"adam.v.{name}"] = arr.shape
        _validate_manifest(entries, expected, payload_bytes)
        payload = _read_exact(f, payload_bytes, "payload")
        _expect_eof(f)

    loaded: dict[str, np.ndarray] = {}
    for e in entries:
        shape = tuple(e["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        loaded[e["name"]] = _f32_from(payload[e["offset"]:e["offset"] + nbytes], shape)

    _assign_arrays(model, loaded)
    state = None
    if has_optimizer:
        params = model.named_parameters()
        state = AdamState(
            m={name: loaded[f"adam.m.{name}"] for name in params},
            v={name: loaded[f"adam.v.{name}"] for name in params},
            t=adam_t)
    return model.eval(), state


def _assign_arrays(model: Model, loaded: dict[str, np.ndarray]) -> None:
    for lane_name, lane in (("encoder", model.encoder), ("decoder", model.decoder)):
        for i, layer in enumerate(lane):
            layer.conv.weights = loaded[f"{lane_name}.{i}.conv.weights"]
            layer.conv.bias = loaded[f"{lane_name}.{i}.conv.bias"]
            layer.bn.gamma = loaded[f"{lane_name}.{i}.bn.gamma"]
            layer.bn.beta = loaded[f"{lane_name}.{i}.bn.beta"]
            layer.bn.running_mean = loaded[f"{lane_name}.{i}.bn.running_mean"]
            layer.bn.running_var = loaded[f"{lane_name}.{i}.bn.running_var"]
    model.merge.weights = loaded["merge.weights"]
    model.merge.bias = loaded["merge.bias"]
