"""Exception types shared across the package."""


class SpellerError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SpellerError):
    """Tensor shapes are incompatible with the requested operation."""


class InputError(SpellerError):
    """Invalid user-supplied data (token ids, lengths, file contents)."""


class ConfigError(SpellerError):
    """Invalid configuration value or combination."""


class GraphError(SpellerError):
    """Misuse of the gradient tape (non-scalar loss, stale graph)."""


class CheckpointError(SpellerError):
    """Corrupt or incompatible checkpoint file."""


class TrainingDivergedError(SpellerError):
    """Loss became non-finite during training."""
