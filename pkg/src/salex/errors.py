"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems -> 1, data problems -> 2,
numeric failures -> 3.
"""


class SalexError(Exception):
    """Base class for all package errors."""


class ShapeError(SalexError, ValueError):
    """Raised when tensor/image dimensions do not satisfy an operation's contract."""


class DataError(SalexError):
    """Raised for malformed input data: bad CSV rows, undecodable images,
    corrupt checkpoints, mismatched taxonomies."""


class NumericError(SalexError):
    """Raised when a computation produces non-finite values or is otherwise
    numerically undefined (e.g. Pearson correlation of a constant vector)."""
