"""Exception hierarchy shared by all horizon_lab modules."""


class HorizonLabError(Exception):
    """Base class for library errors."""


class DomainError(HorizonLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateError(HorizonLabError, ValueError):
    """A quantity needed for normalization vanished (zero variance, singular matrix, ...)."""


class ShapeError(HorizonLabError, ValueError):
    """Array dimensions do not agree."""


class ConfigError(HorizonLabError, ValueError):
    """Invalid experiment or training configuration."""


class TrainingError(HorizonLabError, RuntimeError):
    """Training diverged or produced non-finite values."""
