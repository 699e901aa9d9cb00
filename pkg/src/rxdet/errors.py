"""Exception hierarchy.

Everything the library raises deliberately derives from :class:`RxdetError`,
split into data problems (bad files, shape mismatches, degenerate inputs) and
numeric failures (factorizations that cannot be rescued).  The CLI maps these
onto distinct exit codes.
"""


class RxdetError(Exception):
    """Base class for all deliberate rxdet errors."""


class DataError(RxdetError, ValueError):
    """Malformed input: bad header, dimension mismatch, non-finite values."""


class DegenerateDataError(DataError):
    """Input data carries no usable signal (e.g. all points identical)."""


class NumericError(RxdetError, ArithmeticError):
    """A numeric routine failed beyond recovery (e.g. factorization)."""
