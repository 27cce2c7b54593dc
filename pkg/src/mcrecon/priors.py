"""Score-function evaluators and the inference noise schedule.

Two score-model kinds share one interface: an exact jointly-Gaussian prior
(the verification oracle, with closed-form smoothed scores) and a small
convolutional network trained by denoising score matching (see
``scorenet``).  Scores are gradients of log density with respect to the
stacked real channels produced by ``numerics.complex_to_channels``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidDimensionError,
    InvalidInputError,
    InvalidParameterError,
    MalformedDatasetError,
    OutOfRangeError,
)

KIND_ANALYTIC = "analytic-gaussian"
KIND_TRAINED = "trained-network"

MODEL_MAGIC = b"SCOR"
_KIND_CODES = {KIND_ANALYTIC: 1, KIND_TRAINED: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class NoiseSchedule:
    """Geometric annealing ladder beta_1 > ... > beta_L > 0."""

    beta: np.ndarray
    steps_per_level: int

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=np.float64)
        object.__setattr__(self, "beta", b)
        if b.ndim != 1 or b.size < 2:
            raise InvalidParameterError("schedule needs at least two levels")
        if not np.all(b > 0) or not np.all(np.diff(b) < 0):
            raise InvalidParameterError("beta must be strictly decreasing and positive")
        ratios = b[1:] / b[:-1]
        if np.max(np.abs(ratios - ratios[0])) > 1e-12:
            raise InvalidParameterError("beta spacing must be geometric")
        if self.steps_per_level < 1:
            raise InvalidParameterError("steps_per_level must be positive")

    @property
    def levels(self) -> int:
        return int(self.beta.size)

    @property
    def beta_max(self) -> float:
        return float(self.beta[0])

    @property
    def beta_min(self) -> float:
        return float(self.beta[-1])

    def contains(self, beta: float) -> bool:
        slack = 1e-9 * self.beta_max
        return self.beta_min - slack <= beta <= self.beta_max + slack


def make_schedule(
    beta_max: float, beta_min: float, levels: int, steps_per_level: int = 1
) -> NoiseSchedule:
    """Geometric sequence from beta_max down to beta_min inclusive."""
    if not (beta_max > beta_min > 0):
        raise InvalidParameterError(
            f"need beta_max > beta_min > 0, got {beta_max}, {beta_min}"
        )
    if levels < 2:
        raise InvalidParameterError(f"levels must be >= 2, got {levels}")
    beta = np.geomspace(beta_max, beta_min, levels)
    return NoiseSchedule(beta=beta, steps_per_level=steps_per_level)


class GaussianJointPrior:
    """Exact Gaussian prior over the stacked real coordinates of an image pair.

    Coordinates follow the channel-stack raveling: for a (c, h, w) stack the
    vector is stack.ravel(), i.e. [Re(x1), Im(x1), Re(x2), Im(x2)] blocks for
    a joint prior.  ``dim_first`` marks where the x2 block starts (equal to
    dim for single-image priors).
    """

    def __init__(self, mean: np.ndarray, cov: np.ndarray, dim_first: int | None = None):
        mean = np.asarray(mean, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        d = mean.size
        if cov.shape != (d, d):
            raise InvalidDimensionError(
                f"covariance shape {cov.shape} does not match dim {d}"
            )
        if np.max(np.abs(cov - cov.T)) > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise InvalidParameterError("covariance must be symmetric")
        w, v = np.linalg.eigh(0.5 * (cov + cov.T))
        if w.min() <= 0:
            raise InvalidParameterError(f"covariance must be positive definite (min eig {w.min():g})")
        self.mean = mean
        self.cov = 0.5 * (cov + cov.T)
        self.dim = d
        self.dim_first = d if dim_first is None else int(dim_first)
        self._eigvals = w
        self._eigvecs = v

    def smoothed_inverse_apply(self, beta: float, resid: np.ndarray) -> np.ndarray:
        """(Sigma + beta^2 I)^{-1} @ resid via the cached eigendecomposition."""
        coeff = 1.0 / (self._eigvals + beta * beta)
        proj = self._eigvecs.T @ resid
        return self._eigvecs @ (coeff[:, None] * proj if resid.ndim == 2 else coeff * proj)

    def marginal_second(self) -> "GaussianJointPrior":
        """Marginal prior over the x2 block; used in degeneracy cross-checks."""
        s = self.dim_first
        return GaussianJointPrior(self.mean[s:], self.cov[s:, s:])


def gaussian_score(prior: GaussianJointPrior, x: np.ndarray, beta: float = 0.0) -> np.ndarray:
    """Exact score of the Gaussian smoothed with N(0, beta^2 I).

    Convolving N(mu, Sigma) with N(0, beta^2 I) gives N(mu, Sigma + beta^2 I),
    so the score is -(Sigma + beta^2 I)^{-1} (x - mu).  Input may be a flat
    vector, a channel stack, or a batch of stacks; the output matches.
    """
    if beta < 0:
        raise InvalidParameterError(f"beta must be nonnegative, got {beta}")
    arr = np.asarray(x, dtype=np.float64)
    batched = arr.ndim in (2, 4)
    flat = arr.reshape(arr.shape[0], -1) if batched else arr.reshape(-1)
    if flat.shape[-1] != prior.dim:
        raise InvalidDimensionError(
            f"input dim {flat.shape[-1]} does not match prior dim {prior.dim}"
        )
    resid = (flat - prior.mean).T if batched else flat - prior.mean
    out = -prior.smoothed_inverse_apply(beta, resid)
    return (out.T if batched else out).reshape(arr.shape)


class ScoreModel:
    """Uniform front end over the analytic and trained score evaluators."""

    def __init__(
        self,
        kind: str,
        channels: int,
        schedule: NoiseSchedule,
        prior: GaussianJointPrior | None = None,
        image_shape: tuple[int, int] | None = None,
        net=None,
    ):
        if kind not in (KIND_ANALYTIC, KIND_TRAINED):
            raise InvalidParameterError(f"unknown score-model kind {kind!r}")
        if channels not in (2, 4):
            raise InvalidParameterError(f"channels must be 2 or 4, got {channels}")
        if kind == KIND_ANALYTIC:
            if prior is None or image_shape is None:
                raise InvalidParameterError("analytic model needs prior and image_shape")
            h, w = image_shape
            if prior.dim != channels * h * w:
                raise InvalidDimensionError(
                    f"prior dim {prior.dim} != channels*h*w = {channels * h * w}"
                )
        elif net is None:
            raise InvalidParameterError("trained model needs a network")
        self.kind = kind
        self.channels = channels
        self.schedule = schedule
        self.prior = prior
        self.image_shape = None if image_shape is None else (int(image_shape[0]), int(image_shape[1]))
        self.net = net


def score_eval(model: ScoreModel, x: np.ndarray, beta: float) -> np.ndarray:
    """Evaluate the model's score estimate at smoothing level beta.

    ``x`` is a (channels, h, w) stack or a (batch, channels, h, w) batch of
    stacks; the result has the same shape.  Pure: no state is mutated.
    """
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 3
    if squeeze:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != model.channels:
        raise InvalidInputError(
            f"expected (batch, {model.channels}, h, w) stack, got shape {np.asarray(x).shape}"
        )
    if not model.schedule.contains(beta):
        raise OutOfRangeError(
            f"beta={beta} outside schedule range "
            f"[{model.schedule.beta_min}, {model.schedule.beta_max}]"
        )
    if model.kind == KIND_ANALYTIC:
        if arr.shape[2:] != model.image_shape:
            raise InvalidInputError(
                f"analytic model expects grid {model.image_shape}, got {arr.shape[2:]}"
            )
        out = gaussian_score(model.prior, arr, beta)
    else:
        from .scorenet import net_score

        out = net_score(model.net, arr, beta)
    return out[0] if squeeze else out


def save_model(model: ScoreModel, path) -> None:
    """Write a checkpoint: SCOR header + flat little-endian float64 parameters.

    Analytic models store [mean, covariance-rows]; trained models store the
    network weights in registration order.
    """
    sched = model.schedule
    if model.kind == KIND_ANALYTIC:
        params = np.concatenate([model.prior.mean, model.prior.cov.ravel()])
        h, w = model.image_shape
        extra = model.prior.dim_first
    else:
        from .scorenet import net_flatten

        params = net_flatten(model.net)
        h, w = 0, 0
        extra = model.net.base_width
    header = MODEL_MAGIC + struct.pack(
        "<IIIIIIddIIQ",
        1,
        _KIND_CODES[model.kind],
        model.channels,
        h,
        w,
        extra,
        sched.beta_max,
        sched.beta_min,
        sched.levels,
        sched.steps_per_level,
        params.size,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.astype("<f8").tobytes())


def load_model(path, expect_channels: int | None = None) -> ScoreModel:
    """Read a checkpoint written by :func:`save_model`.

    ``expect_channels`` lets callers reject a checkpoint that does not match
    the requested inference mode before any compute starts.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise MalformedDatasetError(f"bad checkpoint magic in {path}")
    try:
        (
            version,
            kind_code,
            channels,
            h,
            w,
            extra,
            beta_max,
            beta_min,
            levels,
            steps_per_level,
            n_params,
        ) = struct.unpack_from("<IIIIIIddIIQ", data, 4)
    except struct.error as exc:
        raise MalformedDatasetError(f"truncated checkpoint header: {exc}") from exc
    if version != 1 or kind_code not in _CODE_KINDS:
        raise MalformedDatasetError(f"unsupported checkpoint version/kind {version}/{kind_code}")
    offset = 4 + struct.calcsize("<IIIIIIddIIQ")
    if len(data) - offset < n_params * 8:
        raise MalformedDatasetError("truncated checkpoint parameter block")
    params = np.frombuffer(data, dtype="<f8", count=n_params, offset=offset).astype(np.float64)
    kind = _CODE_KINDS[kind_code]
    if expect_channels is not None and channels != expect_channels:
        raise InvalidInputError(
            f"checkpoint has {channels} channels, requested mode needs {expect_channels}"
        )
    schedule = make_schedule(beta_max, beta_min, levels, steps_per_level)
    if kind == KIND_ANALYTIC:
        d = channels * h * w
        if n_params != d + d * d:
            raise MalformedDatasetError("analytic checkpoint parameter count mismatch")
        prior = GaussianJointPrior(params[:d], params[d:].reshape(d, d), dim_first=extra)
        return ScoreModel(kind, channels, schedule, prior=prior, image_shape=(h, w))
    from .scorenet import net_unflatten

    net = net_unflatten(channels, extra, params)
    return ScoreModel(kind, channels, schedule, net=net)
