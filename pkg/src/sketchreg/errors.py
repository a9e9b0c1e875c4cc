"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so new numerical failure modes should
subclass :class:`NumericalError` rather than raising bare ``ValueError``.
"""


class SketchregError(Exception):
    """Base class for all library errors."""


class DimensionError(SketchregError, ValueError):
    """Shapes or sizes are incompatible with the operation."""


class ParameterError(SketchregError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class NumericalError(SketchregError, ArithmeticError):
    """Base class for rank, definiteness and overflow failures."""


class RankError(NumericalError):
    """Matrix is (numerically) rank deficient."""


class DefinitenessError(NumericalError):
    """Matrix is not symmetric positive definite."""


class OverflowSentinel(NumericalError):
    """An intermediate exceeded the finite range we are willing to trust."""


class RadiusError(ParameterError):
    """Data rows exceed the radius the kernel guarantee is stated for."""


class SizeError(DimensionError):
    """Problem is too large for a dense reference computation."""
