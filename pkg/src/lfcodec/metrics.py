"""Reconstruction quality metrics: MSE, PSNR, and windowed SSIM.

SSIM follows the classic recipe: an 11x11 Gaussian window (sigma 1.5)
slides over every valid position, stabilizers C1 = 0.01^2 and C2 = 0.03^2
for unit dynamic range, per-channel maps averaged over positions and
channels.  A light field's score is the mean over its views.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError
from .lightfield import LightField
from .model import Model, forward

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def mse(a: LightField, b: LightField) -> float:
    """Mean squared difference over every view, pixel, and channel."""
    if a.views.shape != b.views.shape:
        raise ShapeError(f"mse: light-field shapes {a.views.shape} and {b.views.shape} differ")
    diff = a.views.astype(np.float64) - b.views.astype(np.float64)
    return float(np.mean(np.square(diff)))


def psnr(mse_value: float, peak: float = 1.0) -> float:
    """10*log10(peak^2 / mse), in decibels; zero error maps to +inf."""
    if mse_value < 0:
        raise ConfigError(f"mse must be >= 0, got {mse_value}")
    if mse_value == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse_value)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D kernel along both axes."""
    k = kernel.shape[0]
    rows = sliding_window_view(x, k, axis=0) @ kernel
    return sliding_window_view(rows, k, axis=1) @ kernel


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity between two images of shape (H, W) or (H, W, C).

    Inputs are compared at unit dynamic range (pixel values in [0, 1]).
    Identical inputs score exactly 1.0: every term of the numerator and
    denominator is computed from the same expressions, so the ratio is
    bitwise 1 at every window.
    """
    if a.shape != b.shape:
        raise ShapeError(f"ssim: image shapes {a.shape} and {b.shape} differ")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise ShapeError(f"ssim expects (H, W) or (H, W, C) images, got shape {a.shape}")
    h, w = a.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")
    kernel = _gaussian_window()
    scores = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch].astype(np.float64)
        y = b[:, :, ch].astype(np.float64)
        mu_x = _filter_valid(x, kernel)
        mu_y = _filter_valid(y, kernel)
        sigma_x = _filter_valid(x * x, kernel) - mu_x * mu_x
        sigma_y = _filter_valid(y * y, kernel) - mu_y * mu_y
        sigma_xy = _filter_valid(x * y, kernel) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sigma_xy + SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def ssim_light_field(a: LightField, b: LightField) -> float:
    """Mean SSIM over all views of the pair."""
    if a.views.shape != b.views.shape:
        raise ShapeError(f"ssim: light-field shapes {a.views.shape} and {b.views.shape} differ")
    total = 0.0
    for r in range(a.rows):
        for c in range(a.cols):
            total += ssim(a.views[r, c], b.views[r, c])
    return total / (a.rows * a.cols)


@dataclass
class QualityRow:
    name: str
    mse: float
    psnr_db: float
    ssim: float


@dataclass
class QualityReport:
    """Per-sample metric rows plus their arithmetic mean."""

    rows: list[QualityRow]

    @property
    def mean_row(self) -> QualityRow:
        n = len(self.rows)
        if n == 0:
            raise ConfigError("report has no rows")
        return QualityRow(
            name="Mean",
            mse=sum(r.mse for r in self.rows) / n,
            psnr_db=sum(r.psnr_db for r in self.rows) / n,
            ssim=sum(r.ssim for r in self.rows) / n,
        )

    def _all_rows(self) -> list[QualityRow]:
        return [*self.rows, self.mean_row]

    def to_csv_text(self) -> str:
        lines = ["name,mse,psnr_db,ssim"]
        for r in self._all_rows():
            lines.append(f"{r.name},{r.mse:.7f},{_fmt_db(r.psnr_db)},{r.ssim:.7f}")
        return "\n".join(lines) + "\n"

    def to_table_text(self) -> str:
        name_w = max(6, max(len(r.name) for r in self._all_rows()))
        header = f"{'Sample':<{name_w}}  {'MSE':>10}  {'PSNR':>9}  {'SSIM':>9}"
        lines = [header, "-" * len(header)]
        for r in self._all_rows():
            lines.append(f"{r.name:<{name_w}}  {r.mse:>10.7f}  {_fmt_db(r.psnr_db):>9}  {r.ssim:>9.7f}")
        return "\n".join(lines) + "\n"

    def save_csv(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv_text())


def _fmt_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.5f}"


def evaluate(model: Model, named_fields: list[tuple[str, LightField]]) -> QualityReport:
    """Forward every field through the model and score the reconstructions."""
    if model.training:
        raise ConfigError("evaluate requires the model in eval mode")
    rows = []
    for name, lf in named_fields:
        rec = forward(model, lf)
        m = mse(lf, rec)
        rows.append(QualityRow(name=name, mse=m, psnr_db=psnr(m),
                               ssim=ssim_light_field(lf, rec)))
    return QualityReport(rows)


def identity_report(named_fields: list[tuple[str, LightField]]) -> QualityReport:
    """Sanity rows comparing each field with itself (MSE 0, SSIM 1)."""
    rows = []
    for name, lf in named_fields:
        m = mse(lf, lf)
        rows.append(QualityRow(name=name, mse=m, psnr_db=psnr(m),
                               ssim=ssim_light_field(lf, lf)))
    return QualityReport(rows)
