"""Exception hierarchy shared by all kgrass modules.

The CLI maps the two top-level families to exit codes: ``ValidationError`` to 2
and ``NumericalError`` to 3.
"""


class KgrassError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(KgrassError, ValueError):
    """A configuration or specification violates its invariants."""


class InputError(ValidationError):
    """Arguments have incompatible shapes or are otherwise malformed."""


class RangeError(ValidationError):
    """A requested window or segment does not fit in the available data."""


class NumericalError(KgrassError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class DegenerateRankError(NumericalError):
    """The cross-Gram matrix has fewer than ``rho`` significant singular values."""


class CutLocusError(NumericalError):
    """The logarithm map is undefined because ``X^T Y`` is singular."""


class SolverError(NumericalError):
    """The sparse-coding solver did not converge."""
