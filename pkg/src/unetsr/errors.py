"""Exception types shared across the package."""


class UnetSRError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(UnetSRError):
    """Shape or extent mismatch; the message names the offending axis."""


class ContractError(UnetSRError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class ConfigError(UnetSRError):
    """Invalid configuration value or combination."""


class CheckpointError(UnetSRError):
    """Corrupt, truncated or incompatible checkpoint file."""


class TrainingError(UnetSRError):
    """Training aborted (e.g. NaN gradients); message names the culprit."""
