"""Exception hierarchy shared by all mcrecon modules."""


class McreconError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(McreconError, ValueError):
    """Array shape does not satisfy an operation's requirements."""


class InvalidParameterError(McreconError, ValueError):
    """Scalar or structural parameter outside its allowed range."""


class InfeasibleAccelerationError(InvalidParameterError):
    """Requested acceleration cannot accommodate the ACS region."""


class InvalidInputError(McreconError, ValueError):
    """Input data (rather than a parameter) is unusable."""


class OutOfRangeError(McreconError, ValueError):
    """Value falls outside the range a model or schedule supports."""


class DegenerateInputError(InvalidInputError):
    """Input is degenerate (e.g. identically zero) for this operation."""


class TrainingFailureError(McreconError, RuntimeError):
    """Score-model training diverged or could not proceed."""


class MalformedDatasetError(McreconError, ValueError):
    """Serialized dataset or checkpoint failed structural validation."""


class InvalidConfigurationError(McreconError, ValueError):
    """Experiment configuration rejected before any compute starts."""
