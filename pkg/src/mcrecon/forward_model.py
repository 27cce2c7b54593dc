"""Cartesian undersampling operators: masks, measurements, adjoints.

A mask selects whole k-space lines (columns for vertical orientation, rows
for horizontal).  Undersampled k-space is always stored zero-filled at the
full grid size, so the adjoint is a single inverse FFT and the selection
matrix stays explicit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleAccelerationError,
    InvalidDimensionError,
    InvalidParameterError,
    MalformedDatasetError,
)
from .numerics import RngHandle, fft2, gaussian_complex, ifft2

ORIENTATIONS = ("vertical", "horizontal")


@dataclass(frozen=True)
class SamplingMask:
    """Binary selection of k-space lines.

    ``selected`` is a boolean vector over line indices; vertical masks select
    columns of the (height, width) grid, horizontal masks select rows.
    ``acceleration`` is the requested R (``math.inf`` for an empty mask).
    """

    width: int
    selected: np.ndarray
    orientation: str
    acceleration: float
    acs_lines: int

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=bool)
        object.__setattr__(self, "selected", sel)
        if self.orientation not in ORIENTATIONS:
            raise InvalidParameterError(f"unknown orientation {self.orientation!r}")
        if sel.shape != (self.width,):
            raise InvalidParameterError(
                f"selected must have length {self.width}, got {sel.shape}"
            )

    @property
    def num_selected(self) -> int:
        return int(self.selected.sum())

    def line_axis(self) -> int:
        """Axis of a (h, w) array that the selected lines run across."""
        return 1 if self.orientation == "vertical" else 0

    def weights(self, shape: tuple[int, int]) -> np.ndarray:
        """Broadcastable 0/1 array applying the mask to a (h, w) grid."""
        h, w = shape
        expect = w if self.orientation == "vertical" else h
        if expect != self.width:
            raise InvalidDimensionError(
                f"{self.orientation} mask of width {self.width} does not fit grid {shape}"
            )
        sel = self.selected.astype(np.float64)
        return sel[None, :] if self.orientation == "vertical" else sel[:, None]

    def apply(self, ksp: np.ndarray) -> np.ndarray:
        """Zero out unselected lines of a k-space array."""
        return np.asarray(ksp) * self.weights(np.asarray(ksp).shape[-2:])


def make_mask(
    rng: RngHandle,
    width: int,
    R: float,
    acs_lines: int,
    orientation: str = "vertical",
) -> SamplingMask:
    """Uniform-random line mask with a centered contiguous ACS block.

    Total selected lines = round(width / R), ACS lines included in the
    budget.  Non-ACS lines are drawn uniformly without replacement.
    """
    if orientation not in ORIENTATIONS:
        raise InvalidParameterError(f"unknown orientation {orientation!r}")
    if width < 1:
        raise InvalidParameterError(f"width must be positive, got {width}")
    if R < 1:
        raise InvalidParameterError(f"acceleration must be >= 1, got {R}")
    if acs_lines < 0:
        raise InvalidParameterError(f"acs_lines must be nonnegative, got {acs_lines}")
    if acs_lines > width:
        raise InvalidParameterError(
            f"acs_lines={acs_lines} exceeds number of lines {width}"
        )
    n_select = int(math.floor(width / R + 0.5))
    if n_select < acs_lines:
        raise InfeasibleAccelerationError(
            f"R={R} budgets {n_select} lines, fewer than acs_lines={acs_lines}"
        )
    selected = np.zeros(width, dtype=bool)
    acs_start = width // 2 - acs_lines // 2
    selected[acs_start : acs_start + acs_lines] = True
    candidates = np.flatnonzero(~selected)
    extra = n_select - acs_lines
    if extra > 0:
        chosen = rng.permutation(candidates)[:extra]
        selected[chosen] = True
    return SamplingMask(
        width=width,
        selected=selected,
        orientation=orientation,
        acceleration=float(R),
        acs_lines=acs_lines,
    )


def empty_mask(width: int, orientation: str = "vertical") -> SamplingMask:
    """Mask selecting no lines (synthesis mode: no measurements at all)."""
    if width < 1:
        raise InvalidParameterError(f"width must be positive, got {width}")
    return SamplingMask(
        width=width,
        selected=np.zeros(width, dtype=bool),
        orientation=orientation,
        acceleration=math.inf,
        acs_lines=0,
    )


def mask_to_json(mask: SamplingMask) -> str:
    """Serialize a mask so experiments can pin exact patterns across runs."""
    obj = {
        "orientation": mask.orientation,
        "width": mask.width,
        "acceleration": None if math.isinf(mask.acceleration) else mask.acceleration,
        "acs_lines": mask.acs_lines,
        "selected": [int(i) for i in np.flatnonzero(mask.selected)],
    }
    return json.dumps(obj)


def mask_from_json(text: str) -> SamplingMask:
    try:
        obj = json.loads(text)
        width = int(obj["width"])
        indices = obj["selected"]
        accel = obj["acceleration"]
        selected = np.zeros(width, dtype=bool)
        selected[np.asarray(indices, dtype=int)] = True
        return SamplingMask(
            width=width,
            selected=selected,
            orientation=obj["orientation"],
            acceleration=math.inf if accel is None else float(accel),
            acs_lines=int(obj["acs_lines"]),
        )
    except (KeyError, TypeError, json.JSONDecodeError, IndexError) as exc:
        raise MalformedDatasetError(f"bad mask JSON: {exc}") from exc


@dataclass(frozen=True)
class MeasurementModel:
    """Forward operator P*F plus the additive-noise level on selected lines."""

    mask: SamplingMask
    noise_std: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.noise_std) or self.noise_std < 0:
            raise InvalidParameterError(
                f"noise_std must be finite and nonnegative, got {self.noise_std}"
            )


def apply_forward(model: MeasurementModel, x: np.ndarray, rng: RngHandle | None = None) -> np.ndarray:
    """Simulate measurements: P*fft2(x) + noise, zero-filled off-mask.

    Noise with E|entry|^2 = noise_std^2 is added on selected lines only;
    unselected lines are exactly zero.  ``rng`` may be omitted when
    noise_std == 0.
    """
    ksp = fft2(x)
    y = model.mask.apply(ksp)
    if model.noise_std > 0:
        if rng is None:
            raise InvalidParameterError("rng required when noise_std > 0")
        eps = gaussian_complex(rng, ksp.shape, model.noise_std)
        y = y + model.mask.apply(eps)
    return y


def apply_adjoint(model: MeasurementModel, y: np.ndarray) -> np.ndarray:
    """Adjoint of the noiseless forward: ifft2(P*y)."""
    return ifft2(model.mask.apply(np.asarray(y, dtype=np.complex128)))


def zero_filled(model: MeasurementModel, y: np.ndarray) -> np.ndarray:
    """Zero-filled reconstruction; equals the pseudo-inverse for these masks.

    P row-selects a unitary transform, so the pseudo-inverse coincides with
    the adjoint.  Named separately because it plays the role of the
    reference-image reconstruction for conditioning.
    """
    return apply_adjoint(model, y)
