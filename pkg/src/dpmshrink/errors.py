"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/parameter problems exit 2,
data problems exit 3, numerical failures exit 4.
"""


class DpmError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(DpmError, ValueError):
    """A parameter violates its domain (non-positive variance, df < dim, ...)."""


class DataError(DpmError, ValueError):
    """Input data is malformed or unusable (bad CSV, constant column, ...)."""


class NumericalError(DpmError, RuntimeError):
    """A numerical routine failed (factorization, non-finite likelihood, ...)."""


class TruncationError(NumericalError):
    """The adaptive truncation level hit its hard cap."""


class SliceSamplerError(NumericalError):
    """The slice sampler exhausted its shrinkage budget."""
