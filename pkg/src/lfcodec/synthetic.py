"""Procedural light fields with genuine view-to-view parallax.

Used by the test suite and the demo scripts: each view samples a smooth
analytic scene at coordinates shifted in proportion to the view's offset
from the grid center, so adjacent views exhibit a controlled disparity.
Values stay inside (0, 1) by construction, away from the clamp rails.
"""
from __future__ import annotations

import numpy as np

from .lightfield import LightField


def synthetic_light_field(grid: int = 3, size: int = 32, *, seed: int = 0,
                          disparity: float = 1.5, contrast: float = 1.0) -> LightField:
    """Build a smooth scene: sinusoidal background plus two drifting blobs.

    ``disparity`` is the per-view pixel shift of the foreground layer; the
    background shifts at a third of that, mimicking depth layering.
    ``contrast`` scales the pattern amplitudes around the 0.5 gray base.
    """
    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.5, 1.5, size=(3, 2))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
    blob_pos = rng.uniform(0.25, 0.75, size=(2, 2))
    blob_sigma = rng.uniform(0.08, 0.2, size=2)
    blob_color = rng.uniform(-1.0, 1.0, size=(2, 3))

    center = (grid - 1) / 2.0
    views = np.empty((grid, grid, size, size, 3), dtype=np.float32)
    base = np.arange(size, dtype=np.float64) / size
    for r in range(grid):
        for c in range(grid):
            dy = disparity * (r - center) / size
            dx = disparity * (c - center) / size
            yy = base[:, None] + dy / 3.0
            xx = base[None, :] + dx / 3.0
            img = np.empty((size, size, 3), dtype=np.float64)
            for ch in range(3):
                img[:, :, ch] = 0.5 + contrast * 0.22 * np.sin(
                    2.0 * np.pi * (freq[ch, 0] * yy + freq[ch, 1] * xx) + phase[ch])
            fy = base[:, None] + dy
            fx = base[None, :] + dx
            for b in range(2):
                falloff = np.exp(-((fy - blob_pos[b, 0]) ** 2 + (fx - blob_pos[b, 1]) ** 2)
                                 / (2.0 * blob_sigma[b] ** 2))
                img += contrast * 0.12 * falloff[:, :, None] * blob_color[b]
            views[r, c] = np.clip(img, 0.02, 0.98)
    return LightField(views)


def synthetic_dataset(count: int, grid: int = 3, size: int = 32, *,
                      seed: int = 0) -> list[LightField]:
    """``count`` scenes with independent geometry, seeded off one root seed."""
    return [synthetic_light_field(grid, size, seed=seed + i) for i in range(count)]
