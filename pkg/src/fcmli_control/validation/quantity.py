"""Unit-aware scalar fields backed by `astropy.units`."""

from __future__ import annotations

import functools
import math
import typing as ty

import pydantic
from pydantic_core import PydanticCustomError, core_schema

if ty.TYPE_CHECKING:
    import astropy.units as u
    from pydantic.json_schema import JsonSchemaValue


@functools.lru_cache(maxsize=64)
def _parse_unit(unit: str) -> u.UnitBase:
    import astropy.units as u

    return u.Unit(unit)


def _to_quantity(value: ty.Any) -> u.Quantity:
    """Coerce a string or Quantity into a Quantity"""
    import astropy.units as u

    if isinstance(value, u.Quantity):
        return value
    try:
        return u.Quantity(value)
    except (TypeError, ValueError) as e:
        err_t = "invalid_quantity"
        msg = "Cannot construct a quantity from {value!r}: {e}"
        raise PydanticCustomError(err_t, msg, {"value": value, "e": str(e)}) from e


class SIQuantity:
    """Pydantic annotation for a physical scalar stored as an SI float

    Accepts a bare number (taken to already be in ``unit``), a string such as
    ``"680 uF"`` or an `astropy.units.Quantity`. Quantities must be equivalent
    to ``unit`` and are converted to it. The validated value is a plain
    ``float``, so numerical code never sees astropy objects.

    Usage:
        class Params(BaseModel):
            l: Annotated[float, SIQuantity("H", gt=0)]

        Params(l="10 mH").l  # 0.01

    Parameters
    ----------
    unit : str
        The SI unit the value is stored in
    gt, ge : float | None
        Lower bounds, in ``unit``
    """

    def __init__(
        self, unit: str, *, gt: float | None = None, ge: float | None = None
    ) -> None:
        self._unit = unit
        self._gt = gt
        self._ge = ge

    @property
    def unit(self) -> str:
        """The unit values are stored in"""
        return self._unit

    def _validate(self, value: ty.Any) -> float:
        if isinstance(value, bool):
            err_t = "invalid_quantity"
            msg = "Expected a number or a quantity, got a bool"
            raise PydanticCustomError(err_t, msg)

        if isinstance(value, (int, float)):
            out = float(value)
        else:
            q = _to_quantity(value)
            target = _parse_unit(self._unit)
            if not q.unit.is_equivalent(target):
                err_t = "astropy_unit_not_equivalent"
                msg = "Unit {unit} is not equivalent to {target}"
                raise PydanticCustomError(
                    err_t, msg, {"unit": q.unit.to_string(), "target": self._unit}
                )
            if not q.isscalar:
                err_t = "scalar_error"
                msg = "Expected a scalar quantity"
                raise PydanticCustomError(err_t, msg)
            out = float(q.to_value(target))

        if not math.isfinite(out):
            err_t = "finite_error"
            msg = "Expected a finite value, got {value}"
            raise PydanticCustomError(err_t, msg, {"value": out})
        if self._gt is not None and not out > self._gt:
            err_t = "bounds_error"
            msg = "Value {value} {unit} must be > {bound}"
            raise PydanticCustomError(
                err_t, msg, {"value": out, "unit": self._unit, "bound": self._gt}
            )
        if self._ge is not None and not out >= self._ge:
            err_t = "bounds_error"
            msg = "Value {value} {unit} must be >= {bound}"
            raise PydanticCustomError(
                err_t, msg, {"value": out, "unit": self._unit, "bound": self._ge}
            )
        return out

    def __get_pydantic_core_schema__(
        self,
        _source_type: ty.Any,
        _handler: pydantic.GetCoreSchemaHandler,
    ) -> core_schema.CoreSchema:
        """Get the pydantic schema for this type"""
        return core_schema.no_info_plain_validator_function(
            self._validate,
            serialization=core_schema.plain_serializer_function_ser_schema(
                float, return_schema=core_schema.float_schema()
            ),
        )

    def __get_pydantic_json_schema__(
        self,
        _core_schema: core_schema.CoreSchema,
        _handler: pydantic.GetJsonSchemaHandler,
    ) -> JsonSchemaValue:
        """Get the JSON schema for this type"""
        return {
            "anyOf": [{"type": "number"}, {"type": "string"}],
            "description": f"A quantity in {self._unit} (number or unit string)",
        }


Volts = ty.Annotated[float, SIQuantity("V", gt=0)]
Ohms = ty.Annotated[float, SIQuantity("Ohm", gt=0)]
Henries = ty.Annotated[float, SIQuantity("H", gt=0)]
Farads = ty.Annotated[float, SIQuantity("F", gt=0)]
Seconds = ty.Annotated[float, SIQuantity("s", gt=0)]
NonNegativeSeconds = ty.Annotated[float, SIQuantity("s", ge=0)]
Hertz = ty.Annotated[float, SIQuantity("Hz", gt=0)]
Amperes = ty.Annotated[float, SIQuantity("A", ge=0)]
