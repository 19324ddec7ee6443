"""Exception types raised across the package."""


class MatbernError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(MatbernError, ValueError):
    """Matrix has non-finite entries, wrong shape, or is not symmetric."""


class DomainError(MatbernError, ValueError):
    """A function was evaluated outside the set where it is defined."""


class NotPSD(MatbernError, ValueError):
    """A matrix required to be nonnegative definite has a negative eigenvalue."""


class DimensionMismatch(MatbernError, ValueError):
    pass


class NotExact(MatbernError):
    """No closed-form moment is available for this ensemble family."""


class NoFiniteNorm(MatbernError, ValueError):
    """The requested Orlicz norm is infinite."""


class OutcomeExplosion(MatbernError, ValueError):
    """Exhaustive enumeration would exceed the outcome budget."""


class ConfigError(MatbernError, ValueError):
    """Experiment configuration failed validation."""
