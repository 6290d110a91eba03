"""Exception hierarchy.

Configuration-type errors (bad user input: distributions, term strings,
file contents, schema mismatches) are distinguished from numerical fit
failures so the command line runner can map them to distinct exit codes.
"""


class JointsaError(Exception):
    """Base class for all package errors."""


class ConfigurationError(JointsaError):
    """Invalid user-supplied configuration (bounds, terms, options)."""


class DataParseError(ConfigurationError):
    """Malformed data file; message carries the row/column location."""


class SchemaError(ConfigurationError):
    """Column set of the supplied data does not match the model."""


class FitError(JointsaError):
    """Numerical failure while fitting a model."""


class SingularFitError(FitError):
    """Model matrix is rank deficient."""


class DivergenceError(FitError):
    """Iterative fit failed to reach a finite state."""


class ConditioningError(FitError):
    """Covariance factorization failed beyond the jitter ladder."""
