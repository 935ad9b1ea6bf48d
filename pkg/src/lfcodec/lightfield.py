"""Light-field container, directory I/O, and view <-> channel-stack conversion.

A light field is a square grid of square RGB views stored as one float32
array of shape (rows, cols, height, width, 3) with pixel values in [0, 1].
On disk it is a directory of 8-bit PNGs named by a zero-padded view index
that walks the grid row-major.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError, ShapeError
from .tensor import Tensor

DEFAULT_VIEW_PATTERN = "input_Cam{index:03d}.png"


@dataclass
class LightField:
    """Grid of RGB views; ``views`` has shape (rows, cols, H, W, 3)."""

    views: np.ndarray

    def __post_init__(self) -> None:
        v = self.views
        if v.ndim != 5 or v.shape[4] != 3:
            raise ShapeError(f"light field views must have shape (rows, cols, H, W, 3), got {v.shape}")
        if v.shape[2] != v.shape[3]:
            raise ShapeError(f"views must be square (1:1 aspect), got {v.shape[2]}x{v.shape[3]}")
        if v.dtype != np.float32:
            self.views = v.astype(np.float32)

    @property
    def rows(self) -> int:
        return self.views.shape[0]

    @property
    def cols(self) -> int:
        return self.views.shape[1]

    @property
    def view_size(self) -> int:
        return self.views.shape[2]


@dataclass
class DatasetLayout:
    """On-disk convention: one directory per light field, one PNG per view."""

    root: Path
    pattern: str = DEFAULT_VIEW_PATTERN
    grid: int = 9

    def __post_init__(self) -> None:
        self.root = Path(self.root)

    def view_path(self, name: str, index: int) -> Path:
        return self.root / name / self.pattern.format(index=index)


def load_light_field(layout: DatasetLayout, name: str) -> LightField:
    """Read one light field; pixels are scaled to [0, 1] by division by 255.

    View index k of the filename maps to grid position (k // grid, k % grid).
    """
    directory = layout.root / name
    if not directory.is_dir():
        raise DatasetError(f"light field directory not found: {directory}")
    grid = layout.grid
    views = None
    for k in range(grid * grid):
        path = layout.view_path(name, k)
        if not path.is_file():
            raise DatasetError(f"missing view index {k} of light field '{name}': {path}")
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        if arr.shape[0] != arr.shape[1]:
            raise DatasetError(
                f"view index {k} of '{name}' is not square: {arr.shape[1]}x{arr.shape[0]}")
        if views is None:
            side = arr.shape[0]
            views = np.empty((grid, grid, side, side, 3), dtype=np.float32)
        elif arr.shape[:2] != views.shape[2:4]:
            raise DatasetError(
                f"view index {k} of '{name}' has size {arr.shape[1]}x{arr.shape[0]}, "
                f"expected {views.shape[3]}x{views.shape[2]}")
        views[k // grid, k % grid] = arr.astype(np.float32) / 255.0
    return LightField(views)


def save_light_field(lf: LightField, directory: Path | str,
                     pattern: str = DEFAULT_VIEW_PATTERN) -> None:
    """Write one 8-bit PNG per view: round(clip(x, 0, 1) * 255), ties to even."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid_cols = lf.cols
    for r in range(lf.rows):
        for c in range(lf.cols):
            quantized = np.rint(np.clip(lf.views[r, c], 0.0, 1.0) * 255.0).astype(np.uint8)
            Image.fromarray(quantized, mode="RGB").save(
                directory / pattern.format(index=r * grid_cols + c))


def list_light_fields(root: Path | str) -> list[str]:
    """Names of all subdirectories of ``root``, sorted."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root not found: {root}")
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def stack_views(lf: LightField) -> Tensor:
    """Stack all views along the channel axis: (1, rows*cols*3, H, W).

    Channel index is (row * cols + col) * 3 + rgb, so each view's RGB
    triplet is contiguous and views walk the grid row-major.
    """
    r, c, h, w, _ = lf.views.shape
    stacked = lf.views.transpose(0, 1, 4, 2, 3).reshape(1, r * c * 3, h, w)
    return np.ascontiguousarray(stacked)


def unstack_views(t: Tensor) -> LightField:
    """Exact inverse of stack_views."""
    if t.ndim != 4 or t.shape[0] != 1:
        raise ShapeError(f"stacked tensor must have shape (1, channels, H, W), got {t.shape}")
    channels = t.shape[1]
    if channels % 3 != 0:
        raise ShapeError(f"channel count {channels} is not divisible by 3")
    n_views = channels // 3
    side = math.isqrt(n_views)
    if side * side != n_views:
        raise ShapeError(f"channel count {channels} is not of the form 3 * n^2")
    h, w = t.shape[2], t.shape[3]
    views = t.reshape(side, side, 3, h, w).transpose(0, 1, 3, 4, 2)
    return LightField(np.ascontiguousarray(views))


def center_view(lf: LightField) -> np.ndarray:
    """The grid-center view as an (H, W, 3) array (copied)."""
    if lf.rows % 2 == 0 or lf.cols % 2 == 0:
        raise ShapeError(f"unsupported grid {lf.rows}x{lf.cols}: center view needs odd dimensions")
    return lf.views[lf.rows // 2, lf.cols // 2].copy()
