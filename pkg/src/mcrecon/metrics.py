"""Reconstruction quality metrics: NRMSE and windowed SSIM.

NRMSE is computed over complex entries; SSIM over magnitude images with a
7x7 uniform window, K1=0.01, K2=0.03, and the dynamic range taken from the
ground-truth magnitude (choices recorded in MetricReport).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidDimensionError, InvalidParameterError

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    """Metric values plus the conventions they were computed under."""

    nrmse: float
    ssim: float
    ssim_window: int = SSIM_WINDOW
    dynamic_range: float = 0.0


def _check_shapes(gt: np.ndarray, rec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(gt, dtype=np.complex128)
    b = np.asarray(rec, dtype=np.complex128)
    if a.shape != b.shape:
        raise InvalidDimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def nrmse(gt: np.ndarray, rec: np.ndarray) -> float:
    """||gt - rec||_2 / ||gt||_2 over complex entries."""
    a, b = _check_shapes(gt, rec)
    denom = np.linalg.norm(a.ravel())
    if denom == 0:
        raise DegenerateInputError("ground truth has zero norm")
    return float(np.linalg.norm((a - b).ravel()) / denom)


def _window_means(img: np.ndarray, win: int) -> np.ndarray:
    """Means over every full win x win window (valid positions only)."""
    padded = np.cumsum(np.cumsum(np.pad(img, ((1, 0), (1, 0))), axis=0), axis=1)
    total = (
        padded[win:, win:]
        - padded[:-win, win:]
        - padded[win:, :-win]
        + padded[:-win, :-win]
    )
    return total / (win * win)


def ssim(
    gt: np.ndarray,
    rec: np.ndarray,
    window: int = SSIM_WINDOW,
    dynamic_range: float | None = None,
) -> float:
    """Mean local structural similarity between magnitude images.

    ``dynamic_range`` defaults to max|gt|; pass it explicitly to make the
    metric symmetric in its arguments.
    """
    a, b = _check_shapes(gt, rec)
    h, w = a.shape
    if window < 1:
        raise InvalidParameterError(f"window must be positive, got {window}")
    if window > min(h, w):
        raise InvalidParameterError(
            f"window {window} larger than image {a.shape}"
        )
    x = np.abs(a)
    y = np.abs(b)
    if dynamic_range is None:
        dynamic_range = float(x.max())
    if dynamic_range <= 0:
        raise DegenerateInputError("dynamic range must be positive (gt all zero?)")
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    mu_x = _window_means(x, window)
    mu_y = _window_means(y, window)
    xx = _window_means(x * x, window) - mu_x**2
    yy = _window_means(y * y, window) - mu_y**2
    xy = _window_means(x * y, window) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def evaluate(gt: np.ndarray, rec: np.ndarray) -> MetricReport:
    """Both metrics under the house conventions."""
    rng_val = float(np.max(np.abs(np.asarray(gt))))
    return MetricReport(
        nrmse=nrmse(gt, rec),
        ssim=ssim(gt, rec),
        ssim_window=SSIM_WINDOW,
        dynamic_range=rng_val,
    )
