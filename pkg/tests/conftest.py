"""Shared fixtures and independent oracle helpers.

The helpers here rebuild the measurement operator and Gaussian posteriors
from first principles (explicit DFT matrices, dense linear algebra) so the
tests never reuse the code paths they are checking.
"""

from __future__ import annotations

import numpy as np
import pytest


def dft_matrix_2d(h: int, w: int) -> np.ndarray:
    """Explicit matrix of the unitary 2D DFT with center-shifted output.

    Matches the library convention: plain unitary DFT, then the output grid
    rolled so DC lands at (h//2, w//2).  Acts on row-major raveled images.
    """

    def dft1(n: int) -> np.ndarray:
        j = np.arange(n)
        return np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)

    mat = np.kron(dft1(h), dft1(w))  # row-major: row (k1*w + k2)
    rows = mat.reshape(h, w, h * w)
    rows = np.roll(np.roll(rows, h // 2, axis=0), w // 2, axis=1)
    return rows.reshape(h * w, h * w)


def real_block(mat: np.ndarray) -> np.ndarray:
    """Real 2d x 2d representation of a complex matrix.

    Acts on stacked coordinates [Re(v); Im(v)], matching the channel-stack
    raveling used by the score models.
    """
    return np.block([[mat.real, -mat.imag], [mat.imag, mat.real]])


def forward_matrix(mask_selected: np.ndarray, orientation: str, h: int, w: int) -> np.ndarray:
    """Real-coordinate matrix of "mask applied to fft2", rows for all pixels.

    Unselected lines correspond to zero rows, mirroring the zero-filled
    k-space layout.
    """
    f2 = dft_matrix_2d(h, w)
    keep = np.zeros((h, w), dtype=bool)
    if orientation == "vertical":
        keep[:, mask_selected] = True
    else:
        keep[mask_selected, :] = True
    masked = f2 * keep.reshape(-1, 1)
    return real_block(masked)


def smooth_spd(dim: int, length: float, nugget: float = 0.05, gain: float = 1.0) -> np.ndarray:
    """Squared-exponential covariance over coordinate index plus a nugget.

    Produces the strongly correlated, low-effective-rank structure the
    sampler oracles need for tight covariance estimates.
    """
    idx = np.arange(dim)
    k = gain * np.exp(-((idx[:, None] - idx[None, :]) ** 2) / (2.0 * length**2))
    return k + nugget * np.eye(dim)


def coupled_joint_cov(dim_each: int, rho: float, length: float = 2.0, nugget: float = 0.05) -> np.ndarray:
    """Joint covariance [[K, rho*K], [rho*K, K]] + nugget, PSD for |rho| < 1."""
    k = smooth_spd(dim_each, length, nugget=0.0)
    top = np.hstack([k, rho * k])
    bot = np.hstack([rho * k, k])
    return np.vstack([top, bot]) + nugget * np.eye(2 * dim_each)


def gaussian_posterior(
    mean: np.ndarray, cov: np.ndarray, a: np.ndarray, b: np.ndarray, noise_var: float
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form posterior of v ~ N(mean, cov) given b = a @ v + N(0, noise_var I).

    Zero rows of ``a`` (unselected lines) contribute nothing because their
    residual is zero by construction in the zero-filled layout.
    """
    gram = a @ cov @ a.T + noise_var * np.eye(a.shape[0])
    gain = cov @ a.T @ np.linalg.inv(gram)
    post_mean = mean + gain @ (b - a @ mean)
    post_cov = cov - gain @ a @ cov
    return post_mean, post_cov


def condition_on_first_block(
    mean: np.ndarray, cov: np.ndarray, split: int, v1: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional over the second block given the first block exactly."""
    m1, m2 = mean[:split], mean[split:]
    s11 = cov[:split, :split]
    s12 = cov[:split, split:]
    s22 = cov[split:, split:]
    gain = s12.T @ np.linalg.inv(s11)
    return m2 + gain @ (v1 - m1), s22 - gain @ s12


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
