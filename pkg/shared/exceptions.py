class CascadeSegException(Exception):
    """Base exception for all cascadeseg errors."""
    pass

class ValidationException(CascadeSegException):
    """Raised when an operation rejects its input data."""
    pass

class ConfigurationException(CascadeSegException):
    """Raised when configuration is invalid or missing."""
    pass

class InvalidStateError(CascadeSegException):
    """Raised when an operation is invalid in the current state."""
    pass

class ResourceLoadError(CascadeSegException):
    """Raised when a file cannot be read or parsed."""
    pass

class DatasetException(CascadeSegException):
    """Raised when no usable samples could be loaded."""
    pass

class TrainingDivergedError(CascadeSegException):
    """Raised when the training loss explodes or becomes NaN."""

    def __init__(self, stage: str, iteration: int, loss: float):
        self.stage = stage
        self.iteration = iteration
        self.loss = loss
        super().__init__(
            f"Training diverged in stage '{stage}' at iteration {iteration}: loss={loss}"
        )

class StageFailedError(CascadeSegException):
    """Raised when an experiment stage aborts."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"Stage '{stage}' failed: {message}")
