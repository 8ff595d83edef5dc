"""Exception types shared across the package."""


class MsguError(Exception):
    """Base class for all package errors."""


class ShapeError(MsguError):
    """Tensor shapes or dimension arithmetic do not conform."""


class GraphError(MsguError):
    """Misuse of the autodiff graph (non-scalar backward, reuse, ...)."""


class ConfigError(MsguError):
    """Invalid run or architecture configuration."""


class DataError(MsguError):
    """Dataset layout, pairing, or image decoding problem."""


class CheckpointError(MsguError):
    """Checkpoint file is malformed or does not match the architecture."""


class OptimizerError(MsguError):
    """Optimizer misuse, e.g. NaN gradients."""


class TrainingError(MsguError):
    """Training aborted (NaN loss, ...)."""
