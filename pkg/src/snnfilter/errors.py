"""Exception and warning types shared across the package."""


class SnnFilterError(Exception):
    """Base class for all package errors."""


class ConfigError(SnnFilterError, ValueError):
    """Invalid scenario configuration (unknown key, bad type, bad dimension)."""


class InvalidStateError(SnnFilterError, ValueError):
    """A state vector contains non-finite entries."""


class SingularMatrixError(SnnFilterError, ValueError):
    """A matrix that must be inverted is singular."""


class DivergenceError(SnnFilterError, ArithmeticError):
    """A simulated or estimated quantity blew up.

    Attributes
    ----------
    step : int or None
        Index of the integration step at which divergence was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class RankDeficientWarning(UserWarning):
    """The measurement Jacobian is not full row rank; a least-squares
    pseudo-inverse is used instead."""
