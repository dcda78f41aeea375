"""Exception hierarchy shared across the package."""


class MmclError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(MmclError):
    """A config value or combination of values is invalid."""


class ValidationError(MmclError):
    """An input violates a documented precondition or schema."""


class NumericalError(MmclError):
    """A computation produced or received non-finite / degenerate values."""


class DegenerateBatchError(MmclError):
    """A batch cannot support the requested loss (e.g. no positive pairs)."""


class TrainingDivergedError(MmclError):
    """Total loss became non-finite during optimization.

    Carries the last finite loss breakdown so the caller can inspect
    which component blew up.
    """

    def __init__(self, message, last_breakdown=None):
        super().__init__(message)
        self.last_breakdown = last_breakdown
