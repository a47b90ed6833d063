"""Exception types raised across the package."""


class FlashError(Exception):
    """Base class for all package errors."""


class ConfigError(FlashError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class InvalidStateError(FlashError, ValueError):
    """Bandit sufficient statistics contain non-finite entries."""


class NumericError(FlashError, ArithmeticError):
    """A numerical routine (e.g. Cholesky) failed."""


class TrainingDivergedError(FlashError, RuntimeError):
    """Local training produced a non-finite loss."""

    def __init__(self, message, round_index=None, epoch=None, client_id=None):
        super().__init__(message)
        self.round_index = round_index
        self.epoch = epoch
        self.client_id = client_id


class AllocationError(FlashError, ValueError):
    """A partitioner could not satisfy the requested allocation."""


class DegenerateBaselineError(FlashError, ValueError):
    """A context ratio was requested against a zero baseline."""
