"""Exceptions raised across latentsft.

Every error carries the process exit code the CLI reports for it.
"""

from __future__ import annotations


class LatentSFTError(Exception):
    """Base class of all library errors."""

    exit_code: int = 1

    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(self.message)


class InvalidArgumentError(LatentSFTError, ValueError):
    """Raised when an operation receives an argument outside its domain."""

    def __init__(self, argument: str, reason: str) -> None:
        self.argument = argument
        super().__init__(f"Invalid argument '{argument}': {reason}")


class CapacityError(LatentSFTError):
    """Raised when a sequence exceeds the model context length."""

    def __init__(self, length: int, limit: int) -> None:
        self.length = length
        self.limit = limit
        super().__init__(f"Sequence of length {length} exceeds context limit {limit}.")


class DivergenceError(LatentSFTError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, stage: str, step: int, loss: float) -> None:
        self.stage = stage
        self.step = step
        super().__init__(
            f"Training diverged in {stage} at step {step} (loss={loss})."
            "\nLower the learning rate or enable gradient clipping."
        )


class MissingLabelsError(LatentSFTError):
    """Raised when stage-2 training finds an example without latent labels."""

    def __init__(self, example_id: str) -> None:
        self.example_id = example_id
        super().__init__(f"No cached latent labels for example '{example_id}'.")


class DataFileError(LatentSFTError):
    """Raised when an input file is missing or unreadable."""

    exit_code = 3

    def __init__(self, path: object, reason: str = "not found") -> None:
        self.path = path
        super().__init__(f"File '{path}' {reason}.")
