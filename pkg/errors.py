class CropeError(Exception):
    """Base class for every error raised by the laboratory"""


class ConfigError(CropeError):
    """Invalid configuration or command-line usage"""


class ShapeError(CropeError, ValueError):
    """Tensor dimensions do not agree"""


class NumericError(CropeError, ArithmeticError):
    """NaN input, non-deterministic objective or wrong precision"""


class DataError(CropeError):
    """Corpus or split cannot produce the requested batches"""


class ConstructionError(ConfigError):
    """Analytic construction called outside its preconditions"""


class AuditError(CropeError):
    """Parameter audit disagrees with itself"""


class CheckpointError(CropeError):
    """Checkpoint manifest, payload or configuration mismatch"""


class TrainingError(CropeError):
    """Training aborted"""

    def __init__(self, message: str, step: int, checkpoint_path=None):
        super().__init__(message)
        self.step = step
        self.checkpoint_path = checkpoint_path
