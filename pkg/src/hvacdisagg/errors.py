"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3.
"""


class DisaggError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DisaggError):
    """Invalid or inconsistent configuration."""


class DataError(DisaggError):
    """Malformed, missing, or numerically unusable input data."""


class SolverError(DisaggError):
    """The fine-tuning solver produced a non-finite objective."""
