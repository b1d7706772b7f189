"""Shared exception types."""


class NonFiniteError(ArithmeticError):
    """A solver state overflowed or became NaN during integration."""


class GridMismatchError(ValueError):
    """Two time grids that must be compatible are not."""


class NotPositiveSemidefiniteError(ArithmeticError):
    """Covariance factorization failed even after diagonal jitter."""


class ConfigError(ValueError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """The configuration document is not syntactically valid."""


class ValidationError(ConfigError):
    """The configuration document is well formed but semantically invalid."""
