"""Unit test for the SI quantity annotation"""

import typing as ty

import astropy.units as u
import pydantic
import pytest

from fcmli_control.validation import Farads, Henries, NonNegativeSeconds, SIQuantity


class Circuit(pydantic.BaseModel):
    """Test model with unit-aware fields"""

    l: Henries
    c: Farads
    t0: NonNegativeSeconds = 0.0


@pytest.mark.parametrize(
    ("value", "truth"),
    [
        pytest.param(0.01, 0.01, id="float"),
        pytest.param(1, 1.0, id="int"),
        pytest.param("10 mH", 0.01, id="str-mH"),
        pytest.param("5000 uH", 0.005, id="str-uH"),
        pytest.param(2 << u.H, 2.0, id="quantity"),
        pytest.param(10 << u.mH, 0.01, id="quantity-mH"),
    ],
)
def test_coercion(value: ty.Any, truth: float) -> None:
    """Test that numbers, strings and quantities become SI floats"""
    model = Circuit(l=value, c=1e-3)
    assert model.l == pytest.approx(truth, rel=1e-12)
    assert type(model.l) is float


@pytest.mark.parametrize(
    ("value", "message"),
    [
        pytest.param("10 m", "not equivalent", id="wrong-unit"),
        pytest.param("banana", "Cannot construct", id="garbage"),
        pytest.param(0.0, "must be >", id="zero"),
        pytest.param(-1e-3, "must be >", id="negative"),
        pytest.param(float("nan"), "finite", id="nan"),
        pytest.param(True, "bool", id="bool"),
        pytest.param([1, 2] << u.H, "scalar", id="vector"),
    ],
)
def test_rejection(value: ty.Any, message: str) -> None:
    """Test that invalid quantities are rejected with a useful message"""
    with pytest.raises(pydantic.ValidationError) as exc_info:
        Circuit(l=value, c=1e-3)
    assert message in str(exc_info.value)


def test_non_negative_allows_zero() -> None:
    """Test the inclusive lower bound"""
    assert Circuit(l=1, c=1, t0="0 s").t0 == 0.0
    with pytest.raises(pydantic.ValidationError):
        Circuit(l=1, c=1, t0=-1)


def test_dump_is_plain_float() -> None:
    """Test that dumps carry SI floats, not quantities"""
    dumped = Circuit(l="10 mH", c="680 uF").model_dump(mode="json")
    assert dumped == {"l": pytest.approx(0.01), "c": pytest.approx(680e-6), "t0": 0.0}


def test_unit_property() -> None:
    """Test the stored unit accessor"""
    assert SIQuantity("Ohm", gt=0).unit == "Ohm"
