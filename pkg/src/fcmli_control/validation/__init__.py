"""Pydantic annotations for arrays and physical quantities"""

from .ndarray import (
    FloatArray,
    FloatVector,
    NDArrayAdapter,
    NDArrayValidator,
    PhaseVector,
    validate_shape,
)
from .quantity import (
    Amperes,
    Farads,
    Henries,
    Hertz,
    NonNegativeSeconds,
    Ohms,
    Seconds,
    SIQuantity,
    Volts,
)

__all__ = [
    "Amperes",
    "Farads",
    "FloatArray",
    "FloatVector",
    "Henries",
    "Hertz",
    "NDArrayAdapter",
    "NDArrayValidator",
    "NonNegativeSeconds",
    "Ohms",
    "PhaseVector",
    "SIQuantity",
    "Seconds",
    "Volts",
    "validate_shape",
]
