"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative numerical routine failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class GenerationError(RuntimeError):
    """Random sampling repeatedly failed to produce a valid object."""


class TrainingError(RuntimeError):
    """Training aborted; carries the iteration at which it failed."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed; carries field context."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{message} (field: {field})")
        self.field = field


class UnsupportedVersionError(DatasetFormatError):
    """A dataset file declares a format version this code cannot read."""
