"""Pydantic adapter for numpy arrays held by models, states and reports."""

from __future__ import annotations

import types
import typing as ty
from collections.abc import Sequence

import numpy as np
import pydantic
from numpy.typing import ArrayLike, NDArray
from pydantic.json_schema import JsonSchemaValue
from pydantic_core import PydanticCustomError, core_schema

ShapeSpec = Sequence[types.EllipsisType | int | str | None]
ShapeItem = int | ty.Literal["..."] | None


def _is_ellipsis(item: object) -> bool:
    return item is ... or item == "..."


def validate_shape(shape: tuple[int, ...], spec: ShapeSpec) -> bool:
    """Validate the shape of an N-D array

    Parameters
    ----------
    shape : tuple[int, ...]
        The shape to validate
    spec : Sequence[Ellipsis | int | None]
        One entry per dimension. ``None`` matches any size, an ``int`` matches
        exactly and ``...`` (or the string ``"..."``) matches zero or more
        dimensions.

    Returns
    -------
    bool
        Whether the shape matched the spec
    """
    spec = list(spec)

    def match(spec_idx: int, arr_idx: int) -> bool:
        if spec_idx == len(spec):
            return arr_idx == len(shape)
        if arr_idx == len(shape):
            return all(_is_ellipsis(s) for s in spec[spec_idx:])

        item = spec[spec_idx]
        if _is_ellipsis(item):
            return any(match(spec_idx + 1, n) for n in range(arr_idx, len(shape) + 1))
        if item is not None and shape[arr_idx] != item:
            return False
        return match(spec_idx + 1, arr_idx + 1)

    return match(0, 0)


class NDArrayValidator(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Validation constraints applied, in field order, to an array"""

    dtype: str | None = None
    ndim: int | None = pydantic.Field(default=None, ge=0)
    shape: tuple[ShapeItem, ...] | None = None
    finite: bool = False
    ge: float | None = None
    le: float | None = None

    @pydantic.field_validator("shape", mode="before")
    @classmethod
    def _ellipsis_to_literal(cls, value: ty.Any) -> ty.Any:
        if value is None:
            return value
        return tuple("..." if item is ... else item for item in value)

    def __call__(self, value: ArrayLike) -> NDArray:
        """Validate and coerce ``value``

        Raises
        ------
        pydantic_core.PydanticCustomError
            If any constraint fails
        """
        arr = np.asarray(value)

        if self.dtype is not None:
            try:
                arr = arr.astype(self.dtype, copy=False)
            except (ValueError, TypeError) as e:
                err_t = "dtype_error"
                msg = "the array could not be converted to {dtype}"
                raise PydanticCustomError(err_t, msg, {"dtype": self.dtype}) from e

        if self.ndim is not None and arr.ndim != self.ndim:
            err_t = "ndim_error"
            msg = "the array had {arr_ndim} dimension(s), expected {ndim}"
            raise PydanticCustomError(
                err_t, msg, {"arr_ndim": arr.ndim, "ndim": self.ndim}
            )

        if self.shape is not None and not validate_shape(arr.shape, self.shape):
            err_t = "shape_error"
            msg = "array shape {shape} does not match spec {spec}"
            raise PydanticCustomError(
                err_t, msg, {"shape": arr.shape, "spec": self.shape}
            )

        if self.finite and not np.all(np.isfinite(arr)):
            err_t = "finite_error"
            msg = "the array contained non-finite values"
            raise PydanticCustomError(err_t, msg)

        checks = ((self.ge, np.greater_equal, ">="), (self.le, np.less_equal, "<="))
        for bound, op, sign in checks:
            if bound is not None and not np.all(op(arr, bound)):
                err_t = "bounds_error"
                msg = "Not all elements were {sign} {bound}"
                raise PydanticCustomError(err_t, msg, {"sign": sign, "bound": bound})

        return arr


class NDArrayAdapter:
    """Pydantic type adapter for numpy ndarrays with validation constraints.

    Usage:
        class Model(BaseModel):
            weights: Annotated[
                np.ndarray,
                NDArrayAdapter(dtype="float64", shape=(None, 8))
            ]

    Arrays serialize to nested lists. Floats are dumped with the shortest
    representation that parses back to the same double, so a JSON round trip
    is bit-exact.

    Parameters
    ----------
    dtype : str | None
        Target dtype, e.g. ``"float64"``
    ndim : int | None
        Required number of dimensions
    shape : Sequence[Ellipsis | int | None] | None
        Shape specification, see `validate_shape`
    finite : bool
        Reject NaN and infinities
    ge, le : float | None
        Element-wise bounds
    """

    def __init__(
        self,
        *,
        dtype: str | None = None,
        ndim: int | None = None,
        shape: ShapeSpec | None = None,
        finite: bool = False,
        ge: float | None = None,
        le: float | None = None,
    ) -> None:
        try:
            self._validator = NDArrayValidator(
                dtype=dtype,
                ndim=ndim,
                shape=tuple(shape) if shape is not None else None,
                finite=finite,
                ge=ge,
                le=le,
            )
        except pydantic.ValidationError as e:
            msg = "Invalid constraint value(s):\n" + "\n".join(
                f"{i + 1}. {err['loc'][0]} ({err['input']!r}) - {err['msg']}"
                for i, err in enumerate(e.errors())
            )
            raise ValueError(msg) from None

    @property
    def validator(self) -> NDArrayValidator:
        """The constraints applied by this adapter"""
        return self._validator

    def __get_pydantic_core_schema__(
        self,
        _source_type: ty.Any,
        _handler: pydantic.GetCoreSchemaHandler,
    ) -> core_schema.CoreSchema:
        """Get the pydantic schema for an NDArray"""
        validate = core_schema.no_info_plain_validator_function(self._validator)

        def serialize(value: NDArray) -> list | float | int:
            return value.tolist()

        return core_schema.json_or_python_schema(
            json_schema=validate,
            python_schema=validate,
            serialization=core_schema.plain_serializer_function_ser_schema(
                serialize,
                when_used="json",
                return_schema=core_schema.any_schema(),
            ),
        )

    def __get_pydantic_json_schema__(
        self,
        _core_schema: core_schema.CoreSchema,
        _handler: pydantic.GetJsonSchemaHandler,
    ) -> JsonSchemaValue:
        """Generate JSON schema for the ndarray field"""
        v = self._validator
        constraints = []
        if v.dtype is not None:
            constraints.append(f"dtype: {v.dtype}")
        if v.shape is not None:
            dims = "x".join("?" if s is None else str(s) for s in v.shape)
            constraints.append(f"shape: ({dims})")
        if v.finite:
            constraints.append("finite")

        schema: dict[str, ty.Any] = {"type": "array"}
        if constraints:
            schema["description"] = "NumPy array: " + ", ".join(constraints)
        return schema


FloatArray = ty.Annotated[np.ndarray, NDArrayAdapter(dtype="float64", finite=True)]
"""Any-shape finite float64 array"""

FloatVector = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="float64", ndim=1, finite=True)
]
"""1-D finite float64 array"""

PhaseVector = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="float64", shape=(3,), finite=True)
]
"""One finite float64 value per phase a, b, c"""
