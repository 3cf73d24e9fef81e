"""Exception hierarchy shared by all modules."""


class ConvDiffError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ConvDiffError, ValueError):
    """An argument lies outside the domain of a closed-form function."""


class ConfigurationError(ConvDiffError, ValueError):
    """Inconsistent or invalid configuration (maps to CLI exit code 2)."""


class DataError(ConvDiffError):
    """Input data cannot be parsed or used (maps to CLI exit code 3)."""


class RangeError(DataError, IndexError):
    """A requested window or index falls outside the available samples."""


class InsufficientDataError(DataError):
    """Too few observations for the requested statistic."""


class DegenerateStatisticError(DataError):
    """A statistic has a zero denominator, e.g. a constant series."""


class SimulationError(ConvDiffError):
    """Drift or diffusion produced non-finite values during simulation."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class OptimizationError(ConvDiffError):
    """No start of the bounded optimizer produced a finite objective."""
