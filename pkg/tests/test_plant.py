"""Unit test for the inverter plant model"""

import typing as ty

import numpy as np
import numpy.testing as npt
import pydantic
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fcmli_control.errors import SimulationDivergedError
from fcmli_control.plant import (
    ALL_STATES,
    PLANT_COLUMNS,
    PlantRecorder,
    PlantState,
    SwitchingState,
    SystemParams,
    common_mode_voltage,
    init_plant,
    phase_output_voltage,
    phase_voltages,
    step_plant,
    switching_table,
)

VDC = 360.0


@pytest.mark.parametrize(
    ("index", "bits"),
    [
        pytest.param(k, (k & 1, (k >> 1) & 1, (k >> 2) & 1), id=f"V{k}")
        for k in range(8)
    ],
)
def test_state_index(index: int, bits: tuple[int, int, int]) -> None:
    """Test the V0..V7 numbering ``s1 + 2*s2 + 4*s3``"""
    state = SwitchingState.from_index(index)
    assert (state.s1, state.s2, state.s3) == bits
    assert state.index == index
    assert state.vector_name == f"V{index}"
    assert ALL_STATES[index] == state


@pytest.mark.parametrize("index", [pytest.param(-1, id="neg"), pytest.param(8, id="8")])
def test_state_index_out_of_range(index: int) -> None:
    """Test that only indices 0..7 name a state"""
    with pytest.raises(ValueError, match="0..7"):
        SwitchingState.from_index(index)


def test_state_rejects_non_bits() -> None:
    """Test that a switch command is 0 or 1"""
    with pytest.raises(pydantic.ValidationError):
        SwitchingState(s1=2, s2=0, s3=0)  # type: ignore[arg-type]


@pytest.mark.parametrize(
    ("index", "truth"),
    [
        pytest.param(0, -180.0, id="V0"),
        pytest.param(1, -60.0, id="V1"),
        pytest.param(2, -60.0, id="V2"),
        pytest.param(3, 60.0, id="V3"),
        pytest.param(4, -60.0, id="V4"),
        pytest.param(5, 60.0, id="V5"),
        pytest.param(6, 60.0, id="V6"),
        pytest.param(7, 180.0, id="V7"),
    ],
)
def test_balanced_levels(index: int, truth: float) -> None:
    """Test the four output levels at balanced capacitor voltages"""
    state = ALL_STATES[index]
    assert phase_output_voltage(state, 120.0, 240.0, VDC) == pytest.approx(truth)
    assert phase_output_voltage(index, 120.0, 240.0, VDC) == pytest.approx(truth)


def test_table_matches_pole_voltage() -> None:
    """Test the switching-state table rows"""
    rows = switching_table(VDC)
    assert [r["vector"] for r in rows] == [f"V{k}" for k in range(8)]
    assert rows[0]["expression"] == "-Vdc/2"
    assert rows[5]["expression"] == "Vdc/2-V2x+V1x"
    npt.assert_allclose(
        [r["v_xn"] for r in rows], [-180, -60, -60, 60, -60, 60, 60, 180]
    )


def test_pole_voltage_broadcasts() -> None:
    """Test the array form against the per-state form"""
    v1 = np.array([110.0, 125.0, 119.0])
    v2 = np.array([250.0, 236.0, 241.0])
    out = phase_output_voltage(np.arange(8)[:, np.newaxis], v1, v2, VDC)
    assert np.shape(out) == (8, 3)
    for k, state in enumerate(ALL_STATES):
        for x in range(3):
            assert out[k, x] == phase_output_voltage(state, v1[x], v2[x], VDC)


@given(
    st.lists(st.integers(0, 7), min_size=3, max_size=3),
    st.lists(st.floats(0, 200), min_size=3, max_size=3),
    st.lists(st.floats(150, 360), min_size=3, max_size=3),
)
def test_phase_voltages_sum_to_zero(
    states: list[int], v1: list[float], v2: list[float]
) -> None:
    """Test that the load phase voltages have no common mode"""
    vph = phase_voltages(states, v1, v2, VDC)
    assert abs(vph.sum()) <= 1e-9 * (1 + np.abs(vph).max())


def test_common_mode() -> None:
    """Test V_ON as the mean of the pole voltages"""
    assert common_mode_voltage(180.0, -60.0, -60.0) == pytest.approx(20.0)
    cm = common_mode_voltage(np.ones(4), np.zeros(4), np.zeros(4))
    npt.assert_allclose(cm, 1 / 3)


class TestSystemParams:
    """Tests of the parameter model"""

    def test_defaults(self) -> None:
        """Test the nominal values"""
        p = SystemParams()
        assert (p.vdc, p.r, p.l, p.c1, p.c2) == (360.0, 15.0, 10e-3, 680e-6, 680e-6)
        assert p.ts == pytest.approx(30e-6)
        assert p.substeps_per_period == 30
        assert p.v1_ref == pytest.approx(120.0)
        assert p.v2_ref == pytest.approx(240.0)

    def test_units(self) -> None:
        """Test unit strings"""
        p = SystemParams(l="5 mH", c1="1000 uF", ts="40 us")
        assert p.l == pytest.approx(5e-3)
        assert p.c1 == pytest.approx(1e-3)
        assert p.substeps_per_period == 40

    @pytest.mark.parametrize(
        "kwargs",
        [
            pytest.param({"plant_substep": 40e-6}, id="substep>ts"),
            pytest.param({"plant_substep": 7e-6}, id="not-multiple"),
            pytest.param({"l": 0}, id="zero-l"),
            pytest.param({"vdc": -1}, id="negative-vdc"),
            pytest.param({"q": 1}, id="extra"),
        ],
    )
    def test_invalid(self, kwargs: dict[str, ty.Any]) -> None:
        """Test rejected parameter sets"""
        with pytest.raises(pydantic.ValidationError):
            SystemParams(**kwargs)


def test_init_plant() -> None:
    """Test the pre-charged rest state"""
    s = init_plant(SystemParams())
    npt.assert_array_equal(s.i, 0)
    npt.assert_allclose(s.v1, 120)
    npt.assert_allclose(s.v2, 240)
    assert (s.tick, s.t) == (0, 0.0)


def _state(i: list[float], v1: float = 120.0, v2: float = 240.0) -> PlantState:
    return PlantState(i=np.array(i), v1=np.full(3, v1), v2=np.full(3, v2))


def test_rl_decay() -> None:
    """Test that equal legs give zero load voltage and a pure RL decay"""
    params = SystemParams()
    out = step_plant(_state([10.0, -5.0, -5.0]), [0, 0, 0], params)
    npt.assert_allclose(out.i, [9.5600, -4.7800, -4.7800], atol=1e-3)
    npt.assert_array_equal(out.v1, 120.0)
    npt.assert_array_equal(out.v2, 240.0)
    assert out.tick == 30
    assert out.t == pytest.approx(30e-6)


def test_capacitor_charge() -> None:
    """Test that V1 moves the inner capacitor by -i*ts/C1 under a decaying i"""
    params = SystemParams()
    out = step_plant(_state([10.0, -5.0, -5.0]), [1, 1, 1], params)
    a = 1 - params.plant_substep * params.r / params.l
    charge = params.plant_substep * (1 - a**30) / (1 - a) / params.c1
    npt.assert_allclose(
        out.v1 - 120.0, [-10 * charge, 5 * charge, 5 * charge], rtol=1e-9
    )
    assert -10 * params.ts / params.c1 == pytest.approx(-0.44118, abs=1e-5)
    npt.assert_array_equal(out.v2, 240.0)


def test_substeps_and_clock() -> None:
    """Test partial periods and the tick-derived clock"""
    params = SystemParams()
    s = init_plant(params)
    s = step_plant(s, [7, 0, 0], params, substeps=12)
    s = step_plant(s, [7, 0, 0], params, substeps=18)
    full = step_plant(init_plant(params), [7, 0, 0], params)
    assert s.tick == full.tick == 30
    npt.assert_array_equal(s.i, full.i)


def test_recorder() -> None:
    """Test that every sub-step is recorded with its time and states"""
    params = SystemParams()
    rec = PlantRecorder(capacity=10)
    s = init_plant(params)
    for _ in range(3):
        s = step_plant(s, [7, 3, 0], params, recorder=rec)
    assert len(rec) == 90
    frame = rec.to_frame()
    assert list(frame.columns) == list(PLANT_COLUMNS)
    npt.assert_allclose(frame["t"], np.arange(1, 91) * 1e-6)
    assert frame["state_a"].dtype == np.int64
    assert set(frame["state_b"]) == {3}
    npt.assert_allclose(frame[["vph_a", "vph_b", "vph_c"]].sum(axis=1), 0, atol=1e-9)
    npt.assert_array_equal(frame.iloc[-1][["i_a", "i_b", "i_c"]], s.i)


def test_divergence() -> None:
    """Test that a non-finite state raises with a diagnostic"""
    params = SystemParams()
    s = PlantState.model_construct(
        i=np.array([np.inf, 0.0, 0.0]),
        v1=np.full(3, 120.0),
        v2=np.full(3, 240.0),
        tick=0,
        t=0.0,
    )
    rec = PlantRecorder()
    with pytest.raises(SimulationDivergedError) as exc_info:
        step_plant(s, [1, 2, 4], params, recorder=rec)
    assert exc_info.value.t == pytest.approx(1e-6)
    assert "i" in exc_info.value.state
    assert len(rec) == 0


def test_plant_state_rejects_nan() -> None:
    """Test that validated states are finite"""
    with pytest.raises(pydantic.ValidationError):
        PlantState(i=[np.nan, 0, 0], v1=[0, 0, 0], v2=[0, 0, 0])  # type: ignore[arg-type]
