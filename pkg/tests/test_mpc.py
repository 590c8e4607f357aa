"""Unit test for the finite-control-set predictive controller"""

import numpy as np
import numpy.testing as npt
import pydantic
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fcmli_control.mpc import (
    ControllerConfig,
    CostWeights,
    PhaseMeasurement,
    Prediction,
    PredictorConstants,
    References,
    candidate_common_mode,
    candidate_costs,
    cost,
    mpc_decide,
    mpc_step,
    other_legs_pole_sum,
    predict,
    reference_currents,
    select_optimal,
)
from fcmli_control.plant import (
    ALL_STATES,
    PlantState,
    SystemParams,
    phase_output_voltage,
)

PARAMS = SystemParams()
CONSTS = PredictorConstants.from_params(PARAMS)


def test_predictor_constants() -> None:
    """Test ``m1 = ts/L`` and ``m2 = 1 - R*ts/L`` at nominal values"""
    assert CONSTS.m1 == pytest.approx(0.003)
    assert CONSTS.m2 == pytest.approx(0.955)


def test_predict_current() -> None:
    """Test the current prediction under V7 with a 60 V common mode"""
    meas = PhaseMeasurement(i=10.0, v1=120.0, v2=240.0)
    pred = predict(meas, ALL_STATES[7], 60.0, CONSTS, PARAMS)
    assert pred.i_next == pytest.approx(9.91)
    assert pred.v1_next == pytest.approx(120.0)
    assert pred.v2_next == pytest.approx(240.0)


@pytest.mark.parametrize(
    ("index", "dv1", "dv2"),
    [
        pytest.param(1, -0.44118, 0.0, id="V1"),
        pytest.param(2, 0.44118, -0.44118, id="V2"),
        pytest.param(4, 0.0, 0.44118, id="V4"),
        pytest.param(6, 0.44118, 0.0, id="V6"),
    ],
)
def test_predict_capacitors(index: int, dv1: float, dv2: float) -> None:
    """Test ``v1' = v1 + ts/C1*i*(s2-s1)`` and ``v2' = v2 + ts/C2*i*(s3-s2)``"""
    meas = PhaseMeasurement(i=10.0, v1=120.0, v2=240.0)
    pred = predict(meas, ALL_STATES[index], 0.0, CONSTS, PARAMS)
    assert pred.v1_next - 120.0 == pytest.approx(dv1, abs=1e-5)
    assert pred.v2_next - 240.0 == pytest.approx(dv2, abs=1e-5)


def test_cost_value() -> None:
    """Test the weighted quadratic cost"""
    refs = References(i_ref=10.0, v1_ref=120.0, v2_ref=240.0)
    pred = Prediction(i_next=8.0, v1_next=121.0, v2_next=237.0)
    assert cost(pred, refs, CostWeights()) == pytest.approx(14.0)
    assert cost(pred, refs, CostWeights(lambda1=2, lambda2=0.5)) == pytest.approx(13.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        pytest.param({"lambda1": 0, "lambda2": 0}, id="both-zero"),
        pytest.param({"lambda1": -1}, id="negative"),
        pytest.param({"lambda2": float("inf")}, id="inf"),
    ],
)
def test_invalid_weights(kwargs: dict[str, float]) -> None:
    """Test rejected weight pairs"""
    with pytest.raises(pydantic.ValidationError):
        CostWeights(**kwargs)


def test_balanced_references() -> None:
    """Test capacitor references at a third and two thirds of vdc"""
    refs = References.balanced(3.0, 360.0)
    assert (refs.v1_ref, refs.v2_ref) == pytest.approx((120.0, 240.0))


def test_reference_currents() -> None:
    """Test the balanced sinusoidal references"""
    npt.assert_allclose(reference_currents(0.0, 10.0, 50.0), [0, -8.660254, 8.660254])
    t = np.linspace(0, 0.02, 7)
    iref = reference_currents(t, 10.0, 50.0)
    assert iref.shape == (7, 3)
    npt.assert_allclose(iref.sum(axis=1), 0, atol=1e-12)
    npt.assert_allclose(iref[:, 0], 10 * np.sin(2 * np.pi * 50 * t))


def _oracle(
    meas: PhaseMeasurement, refs: References, w: CostWeights, v_on: np.ndarray
) -> tuple[int, float]:
    """Scalar re-implementation of the exhaustive search"""
    best, best_cost = -1, np.inf
    ts, c1, c2 = PARAMS.ts, PARAMS.c1, PARAMS.c2
    m1, m2 = ts / PARAMS.l, 1 - PARAMS.r * ts / PARAMS.l
    for k, s in enumerate(ALL_STATES):
        vxn = -PARAMS.vdc / 2 + s.s1 * meas.v1
        vxn += s.s2 * (meas.v2 - meas.v1) + s.s3 * (PARAMS.vdc - meas.v2)
        i_next = (vxn - v_on[k]) * m1 + meas.i * m2
        v1_next = meas.v1 + ts / c1 * meas.i * (s.s2 - s.s1)
        v2_next = meas.v2 + ts / c2 * meas.i * (s.s3 - s.s2)
        j = (
            w.lambda1 * (refs.i_ref - i_next) ** 2
            + w.lambda2 * (refs.v1_ref - v1_next) ** 2
            + w.lambda2 * (refs.v2_ref - v2_next) ** 2
        )
        if j < best_cost:
            best, best_cost = k, j
    return best, best_cost


def test_select_optimal_matches_brute_force() -> None:
    """Test the vectorized search against a scalar search on random cases"""
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        meas = PhaseMeasurement(
            i=rng.uniform(-20, 20), v1=rng.uniform(80, 160), v2=rng.uniform(200, 280)
        )
        refs = References(
            i_ref=rng.uniform(-20, 20), v1_ref=120.0, v2_ref=240.0
        )
        w = CostWeights(lambda1=rng.uniform(0.1, 2), lambda2=rng.uniform(0.1, 2))
        v_on = rng.uniform(-100, 100, size=8)
        state, c = select_optimal(meas, refs, w, CONSTS, PARAMS, v_on)
        k, truth = _oracle(meas, refs, w, v_on)
        assert c == pytest.approx(truth, rel=1e-9, abs=1e-9)
        assert state.index == k


def test_tie_goes_to_lowest_index() -> None:
    """Test that equal costs select the lower vector index"""
    meas = PhaseMeasurement(i=0.0, v1=120.0, v2=240.0)
    refs = References(i_ref=0.0, v1_ref=120.0, v2_ref=240.0)
    w = CostWeights(lambda1=0.0, lambda2=1.0)
    state, c = select_optimal(meas, refs, w, CONSTS, PARAMS, 0.0)
    assert state.index == 0
    assert c == 0.0


@given(order=st.permutations(range(8)))
def test_tie_break_ignores_evaluation_order(order: list[int]) -> None:
    """Test that the lowest tied index wins in any candidate order"""
    meas = PhaseMeasurement(i=0.0, v1=120.0, v2=240.0)
    w = CostWeights(lambda1=1.0, lambda2=1.0)
    # V1, V2 and V4 all give -60 V and hit this reference exactly
    refs = References(i_ref=-60.0 * CONSTS.m1, v1_ref=120.0, v2_ref=240.0)
    state, c = select_optimal(meas, refs, w, CONSTS, PARAMS, 0.0, order)
    assert state.index == 1
    assert c == pytest.approx(0.0, abs=1e-20)

    flat = References(i_ref=0.0, v1_ref=120.0, v2_ref=240.0)
    state, _ = select_optimal(
        meas, flat, CostWeights(lambda1=0.0), CONSTS, PARAMS, 0.0, order
    )
    assert state.index == 0


def test_candidate_order_keeps_common_mode() -> None:
    """Test that per-state common modes follow their state when reordered"""
    meas = PhaseMeasurement(i=3.0, v1=119.0, v2=242.0)
    refs = References(i_ref=5.0, v1_ref=120.0, v2_ref=240.0)
    v_on = np.linspace(-40, 40, 8)
    order = [5, 2, 7, 0, 3, 6, 1, 4]
    natural = candidate_costs(meas, refs, CostWeights(), CONSTS, PARAMS, v_on)
    shuffled = candidate_costs(meas, refs, CostWeights(), CONSTS, PARAMS, v_on, order)
    npt.assert_array_equal(shuffled, natural[order])


def test_cost_scaling_invariance() -> None:
    """Test that scaling both weights keeps the decision"""
    rng = np.random.default_rng(7)
    w = CostWeights(lambda1=1.0, lambda2=0.3)
    for _ in range(200):
        meas = PhaseMeasurement(rng.uniform(-15, 15), rng.uniform(100, 140), 240.0)
        refs = References(rng.uniform(-15, 15), 120.0, 240.0)
        v_on = rng.uniform(-60, 60)
        a, _ = select_optimal(meas, refs, w, CONSTS, PARAMS, v_on)
        b, _ = select_optimal(meas, refs, w.scaled(4.0), CONSTS, PARAMS, v_on)
        assert a == b


def test_candidate_costs_match_cost() -> None:
    """Test that the vector and scalar paths give identical costs"""
    meas = PhaseMeasurement(i=4.0, v1=118.0, v2=243.0)
    refs = References(i_ref=6.0, v1_ref=120.0, v2_ref=240.0)
    w = CostWeights(lambda1=1.0, lambda2=0.5)
    costs = candidate_costs(meas, refs, w, CONSTS, PARAMS, 12.0)
    for k, s in enumerate(ALL_STATES):
        assert costs[k] == cost(predict(meas, s, 12.0, CONSTS, PARAMS), refs, w)


def _plant(i: list[float]) -> PlantState:
    return PlantState(
        i=np.array(i),
        v1=np.array([118.0, 121.0, 120.0]),
        v2=np.array([241.0, 238.0, 240.0]),
    )


def test_candidate_common_mode() -> None:
    """Test the per-leg common mode with the other legs held"""
    meas = _plant([1.0, 2.0, -3.0])
    last = [ALL_STATES[7], ALL_STATES[0], ALL_STATES[3]]
    cm = candidate_common_mode(meas, last, 360.0)
    assert cm.shape == (3, 8)
    a, b, c = (
        phase_output_voltage(last[x], meas.v1[x], meas.v2[x], 360.0) for x in range(3)
    )
    others = other_legs_pole_sum(meas, last, 360.0)
    npt.assert_allclose(others, [b + c, a + c, a + b])
    for x in range(3):
        for c in range(8):
            own = phase_output_voltage(c, meas.v1[x], meas.v2[x], 360.0)
            assert cm[x, c] == pytest.approx((own + others[x]) / 3)


def test_mpc_step_per_leg() -> None:
    """Test that each leg's decision equals the single-leg search"""
    meas = _plant([3.0, -1.0, -2.0])
    refs = [References.balanced(x, 360.0) for x in (8.0, -4.0, -4.0)]
    last = [2, 5, 0]
    w = CostWeights()
    decision = mpc_decide(meas, refs, w, CONSTS, PARAMS, last)
    cm = candidate_common_mode(meas, last, 360.0)
    for x in range(3):
        m = PhaseMeasurement(float(meas.i[x]), float(meas.v1[x]), float(meas.v2[x]))
        state, c = select_optimal(m, refs[x], w, CONSTS, PARAMS, cm[x])
        assert decision.states[x] == state
        assert decision.costs[x] == c
    assert mpc_step(meas, refs, w, CONSTS, PARAMS, last) == decision.states
    npt.assert_array_equal(decision.indices, [s.index for s in decision.states])


def test_controller_config_model_params() -> None:
    """Test that only set model parameters differ from the plant"""
    cfg = ControllerConfig(model_l="5 mH")
    model = cfg.model_params(PARAMS)
    assert model.l == pytest.approx(5e-3)
    assert (model.r, model.c1, model.vdc) == (PARAMS.r, PARAMS.c1, PARAMS.vdc)
    assert cfg.weights == CostWeights()
    with pytest.raises(pydantic.ValidationError):
        ControllerConfig(lambda1=0, lambda2=0).weights  # noqa: B018
