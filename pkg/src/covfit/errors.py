"""Exception hierarchy.

Each class carries the CLI exit status it maps to, so command handlers can
translate failures without a lookup table.
"""


class CovfitError(Exception):
    exit_code = 3


class InputError(CovfitError, ValueError):
    """Malformed or inconsistent user input (labels, sets, file syntax)."""

    exit_code = 2


class DimensionError(CovfitError, ValueError):
    """Sample size too small relative to the number of variables."""


class ModelDataError(CovfitError, ValueError):
    """Input data that parse fine but do not define a valid covariance."""


class ModelMembershipError(CovfitError, ValueError):
    """A covariance matrix violates the zero pattern of a graph."""

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = tuple(offending)


class NumericalError(CovfitError, ArithmeticError):
    exit_code = 4


class NotPositiveDefiniteError(NumericalError):
    """Triangular factorization failed at a pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegenerateSystemError(NumericalError):
    def __init__(self, message, pivot_ratio=None):
        super().__init__(message)
        self.pivot_ratio = pivot_ratio
