"""Sketch-and-precondition solvers for power and attention-kernel regression."""

from .errors import (DefinitenessError, DimensionError, NumericalError, OverflowSentinel,
                     ParameterError, RadiusError, RankError, SizeError, SketchregError)

__version__ = "0.1.0"
