"""Score-guided Bayesian reconstruction of paired-contrast images."""

from .errors import (
    DegenerateInputError,
    InfeasibleAccelerationError,
    InvalidConfigurationError,
    InvalidDimensionError,
    InvalidInputError,
    InvalidParameterError,
    MalformedDatasetError,
    McreconError,
    OutOfRangeError,
    TrainingFailureError,
)
from .forward_model import (
    MeasurementModel,
    SamplingMask,
    apply_adjoint,
    apply_forward,
    empty_mask,
    make_mask,
    mask_from_json,
    mask_to_json,
    zero_filled,
)
from .metrics import MetricReport, evaluate, nrmse, ssim
from .numerics import (
    RngHandle,
    channels_to_complex,
    complex_to_channels,
    derive_rng,
    fft2,
    gaussian_complex,
    ifft2,
    load_image,
    make_rng,
    save_image,
)
from .phantoms import (
    ContrastPair,
    PhantomSpec,
    generate_dataset,
    generate_pair,
    load_dataset,
    normalize_pair,
    save_dataset,
)
from .priors import (
    GaussianJointPrior,
    NoiseSchedule,
    ScoreModel,
    gaussian_score,
    load_model,
    make_schedule,
    save_model,
    score_eval,
)
from .sampler import (
    SamplerConfig,
    SideInfo,
    average_samples,
    sample_posterior_conditional,
    sample_posterior_joint,
    sample_posterior_marginal,
    sample_prior,
)

__version__ = "0.1.0"
