"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, NumericError -> 3.
"""


class PairpickError(Exception):
    """Base class for all toolkit errors."""


class DataError(PairpickError):
    """Corrupt, missing, or inconsistent input data."""


class NumericError(PairpickError):
    """Numeric failure, e.g. diverged training or non-finite results."""


class DegenerateClusterError(PairpickError):
    """2-means cannot split the input (all points identical)."""
