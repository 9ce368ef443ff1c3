"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class SparsefaceError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SparsefaceError):
    """Invalid configuration value, file, or combination of options."""


class DataError(SparsefaceError):
    """Problem with input data: files, manifests, shapes, labels."""


class NumericalError(SparsefaceError):
    """Numerical failure: non-finite values, degenerate systems."""
