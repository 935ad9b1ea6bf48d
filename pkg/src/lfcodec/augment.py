"""Seeded augmentation pipeline: flip, brightness, saturation, crop-resize.

One set of parameters is drawn per sample and applied identically to all
views, keeping the light-field geometry and photometry consistent across
the grid.  The draw order (flip, brightness, saturation, crop size, crop
row, crop col) is fixed so a given generator state always produces the
same sample.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .lightfield import LightField

# Rec.601 luma weights used for the gray axis of the saturation blend.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass
class AugmentConfig:
    brightness_range: tuple[float, float] = (-0.2, 0.2)
    saturation_range: tuple[float, float] = (0.6, 1.6)
    min_crop: int = 256
    flip_probability: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.brightness_range[0] > self.brightness_range[1]:
            raise ConfigError(f"brightness_range lo > hi: {self.brightness_range}")
        if self.saturation_range[0] > self.saturation_range[1]:
            raise ConfigError(f"saturation_range lo > hi: {self.saturation_range}")
        if self.min_crop < 1:
            raise ConfigError(f"min_crop must be >= 1, got {self.min_crop}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError(f"flip_probability must lie in [0, 1], got {self.flip_probability}")


@dataclass
class AugmentParams:
    """One realized draw of the pipeline's random parameters."""

    flip: bool
    brightness: float
    saturation: float
    crop_size: int
    crop_row: int
    crop_col: int


def flip_horizontal(lf: LightField) -> LightField:
    """Mirror every view left-right and reverse the view-grid columns.

    Reversing both keeps the disparity geometry consistent: a feature at
    pixel column c of view (r, u) reappears at column W-1-c of view
    (r, cols-1-u).  Vertical flips are never produced.
    """
    return LightField(np.ascontiguousarray(lf.views[:, ::-1, :, ::-1, :]))


def adjust_brightness(lf: LightField, delta: float) -> LightField:
    """Add ``delta`` to every pixel of every view and clamp to [0, 1]."""
    return LightField(np.clip(lf.views + np.float32(delta), 0.0, 1.0))


def adjust_saturation(lf: LightField, factor: float) -> LightField:
    """Blend each pixel with its Rec.601 gray value: gray + factor*(x - gray).

    Computed as (1-factor)*gray + factor*x so factor 1 is an exact identity
    and factor 0 yields an exact grayscale field; then clamped to [0, 1].
    """
    if factor < 0:
        raise ConfigError(f"saturation factor must be >= 0, got {factor}")
    f = np.float32(factor)
    gray = lf.views @ _LUMA
    blended = (np.float32(1.0) - f) * gray[..., None] + f * lf.views
    return LightField(np.clip(blended, 0.0, 1.0))


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize over the trailing (H, W, C) axes, corner-aligned.

    Sample j of an output axis of length n maps to source coordinate
    j * (size-1) / (n-1); a single output sample maps to coordinate 0.
    Equal input and output sizes return a bit-identical copy.
    """
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize target must be positive, got {out_h}x{out_w}")
    if image.ndim < 3:
        raise ShapeError(f"image must have at least (H, W, C) axes, got shape {image.shape}")
    h, w = image.shape[-3], image.shape[-2]
    if out_h == h and out_w == w:
        return image.copy()

    def axis_coords(size: int, out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if out == 1:
            src = np.zeros(1)
        else:
            # Multiply first so both endpoints land exactly on 0 and size-1.
            src = np.arange(out) * (size - 1) / (out - 1)
        lo = np.minimum(src.astype(np.int64), size - 2) if size > 1 else np.zeros(out, np.int64)
        frac = (src - lo).astype(image.dtype)
        return lo, lo + (1 if size > 1 else 0), frac

    y0, y1, wy = axis_coords(h, out_h)
    x0, x1, wx = axis_coords(w, out_w)
    # Lerp rows then columns; constants survive exactly because each lerp
    # is v0 + frac*(v1 - v0).
    top = image[..., y0, :, :]
    rows = top + wy[:, None, None] * (image[..., y1, :, :] - top)
    left = rows[..., :, x0, :]
    out = left + wx[:, None] * (rows[..., :, x1, :] - left)
    return np.ascontiguousarray(out)


def random_crop_resize(lf: LightField, rng: np.random.Generator, min_crop: int) -> LightField:
    """Crop one shared square window from every view and resize back.

    Window size is uniform over [min_crop, H], position uniform over valid
    placements; the same window is applied to all views.
    """
    size, row, col = _draw_crop(rng, min_crop, lf.view_size)
    return _apply_crop(lf, size, row, col)


def _draw_crop(rng: np.random.Generator, min_crop: int, view_size: int) -> tuple[int, int, int]:
    if min_crop > view_size:
        raise ConfigError(f"min_crop {min_crop} exceeds view size {view_size}")
    size = int(rng.integers(min_crop, view_size + 1))
    row = int(rng.integers(0, view_size - size + 1))
    col = int(rng.integers(0, view_size - size + 1))
    return size, row, col


def _apply_crop(lf: LightField, size: int, row: int, col: int) -> LightField:
    h = lf.view_size
    window = lf.views[:, :, row:row + size, col:col + size, :]
    return LightField(bilinear_resize(window, h, h))


def draw_augment_params(rng: np.random.Generator, cfg: AugmentConfig,
                        view_size: int) -> AugmentParams:
    """Draw one parameter set; always consumes the same number of draws."""
    flip = bool(rng.random() < cfg.flip_probability)
    brightness = float(rng.uniform(*cfg.brightness_range))
    saturation = float(rng.uniform(*cfg.saturation_range))
    size, row, col = _draw_crop(rng, cfg.min_crop, view_size)
    return AugmentParams(flip=flip, brightness=brightness, saturation=saturation,
                         crop_size=size, crop_row=row, crop_col=col)


def apply_augment(lf: LightField, params: AugmentParams) -> LightField:
    """Apply a realized draw in the fixed order flip, brightness, saturation, crop."""
    if params.flip:
        lf = flip_horizontal(lf)
    lf = adjust_brightness(lf, params.brightness)
    lf = adjust_saturation(lf, params.saturation)
    return _apply_crop(lf, params.crop_size, params.crop_row, params.crop_col)


def sample_augmented(lf: LightField, rng: np.random.Generator,
                     cfg: AugmentConfig) -> LightField:
    """One augmented sample, fully determined by the generator state."""
    return apply_augment(lf, draw_augment_params(rng, cfg, lf.view_size))


class AugmentingSampler:
    """Streams augmented samples from a pool of base light fields.

    Each request picks a base field uniformly at random and augments it, so
    the trainer effectively never revisits the exact same sample.  Stateless
    apart from the caller-provided generator, so parallel samplers with
    independent seeds are safe.
    """

    def __init__(self, fields: Sequence[LightField], cfg: AugmentConfig):
        if not fields:
            raise ConfigError("sampler needs at least one base light field")
        self.fields = list(fields)
        self.cfg = cfg

    def __call__(self, rng: np.random.Generator, n: int) -> list[LightField]:
        out = []
        for _ in range(n):
            idx = int(rng.integers(0, len(self.fields)))
            out.append(sample_augmented(self.fields[idx], rng, self.cfg))
        return out


class FixedSampler:
    """Cycles through a fixed list of fields without augmentation."""

    def __init__(self, fields: Sequence[LightField]):
        if not fields:
            raise ConfigError("sampler needs at least one light field")
        self.fields = list(fields)
        self._next = 0

    def __call__(self, rng: np.random.Generator, n: int) -> list[LightField]:
        out = []
        for _ in range(n):
            out.append(self.fields[self._next % len(self.fields)])
            self._next += 1
        return out
