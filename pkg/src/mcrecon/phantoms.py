"""Synthetic paired-contrast phantoms and dataset serialization.

Each pair shares one random ellipse geometry; the two contrasts differ only
in per-tissue-class amplitudes (the second contrast is globally weaker by
``contrast_ratio``, with per-class jitter).  A smooth random phase field is
shared across both contrasts, mimicking hardware-induced phase.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidInputError,
    InvalidParameterError,
    MalformedDatasetError,
)
from .numerics import RngHandle, derive_rng, image_from_bytes

DATASET_MAGIC = b"MCPR"


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and intensity recipe for one family of phantom pairs."""

    grid: tuple[int, int] = (64, 64)
    ellipses: tuple[int, int] = (4, 8)
    class_amplitudes: tuple[float, ...] = (0.25, 0.45, 0.7, 1.0)
    contrast_ratio: float = 0.7
    amplitude_jitter: float = 0.1
    phase_cycles: float = 1.5
    phase_amplitude: float = 1.2

    def __post_init__(self):
        if self.ellipses[0] < 1 or self.ellipses[1] < self.ellipses[0]:
            raise InvalidParameterError(f"bad ellipse count range {self.ellipses}")
        if not (0 < self.contrast_ratio <= 1):
            raise InvalidParameterError(
                f"contrast_ratio must lie in (0, 1], got {self.contrast_ratio}"
            )
        if not (0 <= self.amplitude_jitter < 1):
            raise InvalidParameterError(
                f"amplitude_jitter must lie in [0, 1), got {self.amplitude_jitter}"
            )
        if any(a <= 0 for a in self.class_amplitudes):
            raise InvalidParameterError("class amplitudes must be positive")


@dataclass(frozen=True)
class ContrastPair:
    """Aligned image pair plus the normalization scalar applied to it."""

    x1: np.ndarray
    x2: np.ndarray
    normalization: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.x1, dtype=np.complex128)
        b = np.asarray(self.x2, dtype=np.complex128)
        if a.shape != b.shape:
            raise InvalidInputError(f"contrast shapes differ: {a.shape} vs {b.shape}")
        object.__setattr__(self, "x1", a)
        object.__setattr__(self, "x2", b)


def _ellipse_mask(grid: tuple[int, int], cx, cy, ax, ay, angle) -> np.ndarray:
    h, w = grid
    ys = np.linspace(-1.0, 1.0, h)[:, None]
    xs = np.linspace(-1.0, 1.0, w)[None, :]
    c, s = np.cos(angle), np.sin(angle)
    u = (xs - cx) * c + (ys - cy) * s
    v = -(xs - cx) * s + (ys - cy) * c
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


def _smooth_phase(rng: RngHandle, grid: tuple[int, int], cycles: float, amplitude: float) -> np.ndarray:
    """Low-frequency random phase map in [-amplitude, amplitude] radians."""
    h, w = grid
    noise = rng.standard_normal((h, w))
    fy = np.fft.fftshift(np.fft.fftfreq(h))[:, None]
    fx = np.fft.fftshift(np.fft.fftfreq(w))[None, :]
    cutoff = cycles / max(h, w)
    envelope = np.exp(-(fy**2 + fx**2) / (2.0 * cutoff**2))
    spectrum = np.fft.fftshift(np.fft.fft2(noise)) * envelope
    fieldmap = np.real(np.fft.ifft2(np.fft.ifftshift(spectrum)))
    peak = np.max(np.abs(fieldmap))
    if peak == 0:
        return np.zeros(grid)
    return fieldmap * (amplitude / peak)


def generate_pair(rng: RngHandle, spec: PhantomSpec) -> ContrastPair:
    """One random phantom pair with shared geometry; deterministic under seed."""
    h, w = spec.grid
    n_classes = len(spec.class_amplitudes)
    count = int(rng.integers(spec.ellipses[0], spec.ellipses[1] + 1))
    mag1 = np.zeros(spec.grid)
    mag2 = np.zeros(spec.grid)
    amps1 = np.asarray(spec.class_amplitudes)
    jitter = 1.0 + spec.amplitude_jitter * rng.uniform(-1.0, 1.0, size=n_classes)
    amps2 = amps1 * spec.contrast_ratio * jitter
    for k in range(count):
        if k == 0:
            cx, cy = rng.uniform(-0.1, 0.1, size=2)
            ax, ay = rng.uniform(0.6, 0.85, size=2)
        else:
            cx, cy = rng.uniform(-0.45, 0.45, size=2)
            ax, ay = rng.uniform(0.08, 0.4, size=2)
        angle = rng.uniform(0.0, np.pi)
        cls = int(rng.integers(0, n_classes))
        mask = _ellipse_mask(spec.grid, cx, cy, ax, ay, angle)
        mag1 += amps1[cls] * mask
        mag2 += amps2[cls] * mask
    phase = np.exp(1j * _smooth_phase(rng, spec.grid, spec.phase_cycles, spec.phase_amplitude))
    return ContrastPair(x1=mag1 * phase, x2=mag2 * phase)


def percentile_99(magnitudes: np.ndarray) -> float:
    """Nearest-rank 99th percentile of a magnitude array."""
    flat = np.sort(np.asarray(magnitudes, dtype=np.float64).ravel())
    rank = int(np.ceil(0.99 * flat.size)) - 1
    return float(flat[rank])


def normalize_pair(pair: ContrastPair) -> ContrastPair:
    """Divide both images by the 99th-percentile magnitude of x1."""
    scale = percentile_99(np.abs(pair.x1))
    if scale == 0:
        raise DegenerateInputError("x1 is (almost) identically zero; cannot normalize")
    return ContrastPair(
        x1=pair.x1 / scale, x2=pair.x2 / scale, normalization=scale
    )


def generate_dataset(seed: int, spec: PhantomSpec, count: int) -> list[ContrastPair]:
    """Generate ``count`` normalized pairs with per-pair derived streams."""
    if count < 1:
        raise InvalidParameterError(f"count must be positive, got {count}")
    return [
        normalize_pair(generate_pair(derive_rng(seed, k), spec)) for k in range(count)
    ]


def save_dataset(pairs: list[ContrastPair], path) -> None:
    """Write pairs: MCPR header + count x 2 images in the binary tensor format."""
    if len(pairs) == 0:
        raise InvalidInputError("refusing to save an empty dataset")
    h, w = pairs[0].x1.shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC + struct.pack("<III", len(pairs), h, w))
        for pair in pairs:
            if pair.x1.shape != (h, w):
                raise InvalidInputError("all pairs in a dataset must share a grid")
            _write_image(fh, pair.x1)
            _write_image(fh, pair.x2)


def _write_image(fh, img: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(img, dtype=np.complex128))
    h, w = arr.shape
    fh.write(b"CIMG" + struct.pack("<III", h, w, 0))
    fh.write(arr.astype("<c16").tobytes())


def load_dataset(path) -> list[ContrastPair]:
    """Read a dataset written by :func:`save_dataset`; images round-trip bit-exactly."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != DATASET_MAGIC:
        raise MalformedDatasetError(f"bad dataset magic in {path}")
    count, h, w = struct.unpack_from("<III", data, 4)
    if count < 1:
        raise MalformedDatasetError("dataset header reports zero pairs")
    offset = 16
    pairs = []
    for _ in range(count):
        x1, offset = image_from_bytes(data, offset)
        x2, offset = image_from_bytes(data, offset)
        if x1.shape != (h, w) or x2.shape != (h, w):
            raise MalformedDatasetError("image dimensions disagree with dataset header")
        pairs.append(ContrastPair(x1=x1, x2=x2))
    if offset != len(data):
        raise MalformedDatasetError("trailing bytes after final image payload")
    return pairs
