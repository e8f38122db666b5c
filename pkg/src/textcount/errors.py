"""Exception types shared across the toolkit."""


class TextcountError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(TextcountError, ValueError):
    """A config value or combination of values is invalid."""


class InputError(TextcountError, ValueError):
    """A runtime input (image, tokens, shapes) violates an operation's contract."""


class DatasetError(TextcountError, ValueError):
    """Dataset files are missing, malformed, or inconsistent.

    ``violations`` lists one human-readable message per offending item.
    """

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        base = super().__str__()
        if self.violations:
            return base + "\n  - " + "\n  - ".join(self.violations)
        return base


class CheckpointError(TextcountError, RuntimeError):
    """A checkpoint file is unreadable, corrupt, or incomplete."""


class TrainingDiverged(TextcountError, RuntimeError):
    """Training hit a non-finite loss; carries diagnostic context."""

    def __init__(self, message: str, loss_value: float, sample_ids: list[str]):
        super().__init__(message)
        self.loss_value = loss_value
        self.sample_ids = sample_ids
