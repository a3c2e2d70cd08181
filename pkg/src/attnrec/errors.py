"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and its
subclasses) -> 2, NumericalError -> 3.
"""


class Error(Exception):
    """Base class for all package errors."""


class ConfigError(Error):
    """Invalid configuration: bad hyperparameters, unknown keys, bad flags."""


class DataError(Error):
    """Problem with input data files or matrix contents."""


class ParseError(DataError):
    """Malformed input file; the message names the offending line."""


class BoundsError(DataError):
    """An index in the input refers outside the declared range."""


class NumericalError(Error):
    """Numerical failure: NaN loss, singular solve, objective increase."""
