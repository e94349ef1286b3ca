"""Exception hierarchy shared across the package."""


class TdlmError(Exception):
    """Base class for all package errors."""


class ShapeError(TdlmError):
    """Tensor operands have incompatible shapes."""


class NumericError(TdlmError):
    """Non-finite values where finite ones are required."""


class ConfigError(TdlmError):
    """Invalid configuration value or flag combination."""


class IngestionError(TdlmError):
    """Corpus file cannot be parsed or is empty."""


class DataError(TdlmError):
    """Corpus content violates what the current mode requires."""


class CheckpointError(TdlmError):
    """Checkpoint file is malformed, truncated, or incompatible."""


class EvalError(TdlmError):
    """Evaluation requested on unusable input (e.g. an empty split)."""


class DivergenceError(TdlmError):
    """Training loss became non-finite."""

    def __init__(self, task: str, step: int):
        super().__init__(f"non-finite loss in {task} sub-task at optimizer step {step}")
        self.task = task
        self.step = step


class InvariantError(TdlmError):
    """An internal invariant was violated (e.g. missing gradient)."""
