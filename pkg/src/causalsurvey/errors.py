"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class CausalSurveyError(Exception):
    """Base class for all package errors."""


class ConfigError(CausalSurveyError):
    """Invalid configuration: bad schema, unknown keys, out-of-range knobs."""


class DataError(CausalSurveyError):
    """Problems with input data: missing columns, empty samples, bad joins."""


class NumericalError(CausalSurveyError):
    """Unrecoverable numerical failure (nonconvergence without fallback)."""
