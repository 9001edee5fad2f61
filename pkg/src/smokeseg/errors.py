"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/config errors -> 2, data errors -> 3,
training failures -> 4.
"""


class SmokesegError(Exception):
    """Base class for all package errors."""


class UsageError(SmokesegError):
    """Bad user input: malformed names, unknown config keys, bad flags."""


class DataError(SmokesegError):
    """Malformed or inconsistent data on disk or in memory."""


class TrainingError(SmokesegError):
    """Training could not produce a usable model."""


class BandCountError(DataError):
    """Raster does not carry the expected number of bands."""


class DataIntegrityError(DataError):
    """Raster payload contains non-finite or otherwise invalid values."""


class RasterIoError(DataError):
    """File is unreadable or not a valid raster container."""


class LabelSchemaError(DataError):
    """Annotation or mask violates the class/color schema."""


class PairingError(DataError):
    """Paired arrays (image/mask, prediction/label, ...) disagree in shape."""


class ContractError(DataError):
    """An input violates a documented precondition."""


class EmptyEvaluationError(DataError):
    """Aggregation was asked to average zero image evaluations."""


class GraphShapeError(SmokesegError):
    """Model graph construction or wiring produced inconsistent shapes."""


class ModelNameError(UsageError):
    """Model-name string does not follow the variant grammar."""


class ConfigError(UsageError):
    """Config file or flag set is invalid."""


class TrainingDivergedError(TrainingError):
    """Loss became non-finite during a training session."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class AllSessionsFailedError(TrainingError):
    """Every training session diverged; no model to select."""
