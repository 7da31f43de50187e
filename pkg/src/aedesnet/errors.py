"""Exception types shared across the package."""


class AedesnetError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(AedesnetError, ValueError):
    """Tensor shapes do not line up for the requested operation."""


class ContractError(AedesnetError, ValueError):
    """An input violates a documented precondition."""


class ConfigError(AedesnetError, ValueError):
    """A configuration value is out of its allowed range."""


class StateError(AedesnetError, RuntimeError):
    """Operation called out of order, e.g. backward without a cached forward."""


class DataError(AedesnetError, RuntimeError):
    """A dataset is structurally unusable (missing classes, no images, ...)."""


class NumericError(AedesnetError, RuntimeError):
    """A numerical routine failed to converge."""


class FormatError(AedesnetError, RuntimeError):
    """A model file is not in the expected binary format."""


class UnsupportedVersionError(FormatError):
    """A model file declares a format version this reader does not know."""


class CorruptionError(FormatError):
    """A model file failed its integrity check or is truncated."""


class InputError(AedesnetError, ValueError):
    """A provided image cannot be decoded."""


class TrainingDiverged(AedesnetError, RuntimeError):
    """Training produced a non-finite loss."""
