"""Exception types shared across the package."""


class JmmfrError(Exception):
    """Base class for all package errors."""


class GraphFormatError(JmmfrError):
    """Raised on malformed or inconsistent graph input files."""


class GraphOpError(JmmfrError):
    """Raised on invalid graph-level operations (bad ids, ratios, splits)."""


class ConfigError(JmmfrError):
    """Raised on invalid experiment or generator configuration."""


class TapeError(JmmfrError):
    """Raised on invalid autodiff usage (shape mismatch, duplicate names)."""


class NonFiniteGradientError(TapeError):
    """Raised by the optimizer when a gradient is NaN or infinite."""

    def __init__(self, tensor_name: str):
        super().__init__(f"non-finite gradient in tensor {tensor_name!r}")
        self.tensor_name = tensor_name


class CheckpointError(JmmfrError):
    """Raised on unreadable or incompatible parameter checkpoints."""


class MetricError(JmmfrError):
    """Raised on undefined metric computations (empty inputs, no positives)."""


class TrainingError(JmmfrError):
    """Raised when training cannot proceed (non-finite loss, empty batches)."""
