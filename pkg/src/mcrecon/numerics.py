"""Complex 2D arrays, unitary Fourier transforms, and seeded randomness.

Images live in numpy ``complex128`` arrays of shape (height, width).  All
transforms use the unitary (orthonormal) normalization with the DC component
at the array center, so ``ifft2`` is simultaneously the exact inverse and the
adjoint of ``fft2``.  Grid sizes are restricted to powers of two.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import (
    InvalidDimensionError,
    InvalidParameterError,
    MalformedDatasetError,
)

RngHandle = np.random.Generator

IMAGE_MAGIC = b"CIMG"


def make_rng(seed: int) -> RngHandle:
    """Create a deterministic random stream from a 64-bit seed."""
    return np.random.default_rng(np.uint64(seed))


def derive_rng(seed: int, *keys: int) -> RngHandle:
    """Create an independent stream keyed by (seed, *keys).

    Work items that may run concurrently (slices, repeated posterior
    samples) each derive their own stream so results do not depend on
    execution order.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in keys)))


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check shape/dtype constraints and return the array as complex128."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise InvalidDimensionError(f"{name} must be 2D, got shape {arr.shape}")
    h, w = arr.shape
    if h < 1 or w < 1:
        raise InvalidDimensionError(f"{name} has a zero dimension: {arr.shape}")
    if not (_is_power_of_two(h) and _is_power_of_two(w)):
        raise InvalidDimensionError(
            f"{name} dimensions must be powers of two, got {arr.shape}"
        )
    return np.ascontiguousarray(arr, dtype=np.complex128)


def fft2(img: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT with the spectrum rearranged so DC sits at (h//2, w//2).

    Image-domain indexing is plain (origin at [0, 0]); only the k-space
    output is center-shifted, which puts the low frequencies under the
    centered ACS block of the sampling masks.  Parseval holds exactly up
    to float rounding.
    """
    x = validate_image(img)
    return np.fft.fftshift(np.fft.fft2(x, norm="ortho"))


def ifft2(ksp: np.ndarray) -> np.ndarray:
    """Inverse (and adjoint) of :func:`fft2`."""
    y = validate_image(ksp, name="kspace")
    return np.fft.ifft2(np.fft.ifftshift(y), norm="ortho")


def gaussian_complex(rng: RngHandle, shape: tuple[int, int], std: float) -> np.ndarray:
    """Complex white Gaussian array with E|entry|^2 = std**2.

    Real and imaginary parts are independent N(0, std^2/2).
    """
    if std < 0:
        raise InvalidParameterError(f"std must be nonnegative, got {std}")
    h, w = int(shape[0]), int(shape[1])
    if h < 1 or w < 1:
        raise InvalidDimensionError(f"shape must be positive, got {shape}")
    draws = rng.standard_normal((2, h, w))
    scale = std / np.sqrt(2.0)
    return (draws[0] + 1j * draws[1]) * scale


def complex_to_channels(*images: np.ndarray) -> np.ndarray:
    """Stack complex images into a real channel tensor.

    n images -> float64 array of shape (2n, h, w) ordered
    [Re(img0), Im(img0), Re(img1), Im(img1), ...].  This is the layout the
    score models consume.
    """
    chans = []
    shape = None
    for img in images:
        arr = np.asarray(img, dtype=np.complex128)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise InvalidDimensionError(
                f"all images must share a shape, got {shape} and {arr.shape}"
            )
        chans.append(arr.real)
        chans.append(arr.imag)
    return np.ascontiguousarray(np.stack(chans, axis=0), dtype=np.float64)


def channels_to_complex(stack: np.ndarray) -> tuple[np.ndarray, ...]:
    """Inverse of :func:`complex_to_channels`; returns one image per channel pair."""
    arr = np.asarray(stack, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] % 2 != 0:
        raise InvalidDimensionError(
            f"channel stack must have shape (2n, h, w), got {arr.shape}"
        )
    return tuple(arr[2 * i] + 1j * arr[2 * i + 1] for i in range(arr.shape[0] // 2))


def save_image(img: np.ndarray, path) -> None:
    """Write a complex image in the binary tensor format.

    Layout: 16-byte header (magic "CIMG", u32 height, u32 width, u32 flags)
    followed by height*width little-endian float64 (real, imag) pairs.
    """
    arr = np.ascontiguousarray(np.asarray(img, dtype=np.complex128))
    if arr.ndim != 2:
        raise InvalidDimensionError(f"image must be 2D, got shape {arr.shape}")
    h, w = arr.shape
    header = IMAGE_MAGIC + struct.pack("<III", h, w, 0)
    payload = arr.astype("<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_image(path) -> np.ndarray:
    """Read a complex image written by :func:`save_image`."""
    with open(path, "rb") as fh:
        data = fh.read()
    return image_from_bytes(data, offset=0)[0]


def image_from_bytes(data: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one serialized image starting at ``offset``; return (image, next offset)."""
    if len(data) - offset < 16:
        raise MalformedDatasetError("truncated image header")
    magic = data[offset : offset + 4]
    if magic != IMAGE_MAGIC:
        raise MalformedDatasetError(f"bad image magic {magic!r}")
    h, w, _flags = struct.unpack_from("<III", data, offset + 4)
    if h < 1 or w < 1:
        raise MalformedDatasetError(f"bad image dimensions {h}x{w}")
    nbytes = h * w * 16
    start = offset + 16
    if len(data) - start < nbytes:
        raise MalformedDatasetError("truncated image payload")
    arr = np.frombuffer(data, dtype="<c16", count=h * w, offset=start)
    return arr.reshape(h, w).astype(np.complex128), start + nbytes
