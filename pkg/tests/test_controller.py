"""Unit test for closed-loop runs"""

from pathlib import Path

import numpy as np
import numpy.testing as npt
import pandas as pd
import pydantic
import pytest

from fcmli_control.analysis import tracking_rms_error
from fcmli_control.ann.model import MlpModel, init_model, predict_classes, save_model
from fcmli_control.ann.training import LabeledSet, evaluate
from fcmli_control.controller import (
    AnnControllerSpec,
    ControlStep,
    MpcControllerSpec,
    RunScript,
    ScheduledEvent,
    ann_control_step,
    read_run,
    run_closed_loop,
)
from fcmli_control.dataset import generate_dataset, recorded_steps
from fcmli_control.errors import ModelMismatchError
from fcmli_control.features import FeatureVariant, feature_matrix
from fcmli_control.mpc import ControllerConfig, References
from fcmli_control.plant import (
    PLANT_COLUMNS,
    PlantRecorder,
    PlantState,
    SystemParams,
    init_plant,
    step_plant,
)
from fcmli_control.scenarios import NOMINAL, ScenarioConfig


def _scenario(duration: float, **params: float) -> ScenarioConfig:
    return ScenarioConfig(
        scenario_id="test", base=SystemParams(**params), duration=duration
    )


@pytest.fixture(scope="module")
def mpc_run():  # noqa: ANN201
    """Two cycles of the nominal predictive controller"""
    script = RunScript(scenario=NOMINAL.model_copy(update={"duration": 0.04}))
    return run_closed_loop(script)


def test_run_layout(mpc_run) -> None:  # noqa: ANN001
    """Test the recorded columns and counters"""
    frame = mpc_run.frame
    assert list(frame.columns) == [*PLANT_COLUMNS, "iref_a", "iref_b", "iref_c"]
    assert len(frame) == 40_000
    assert frame["t"].iloc[-1] == pytest.approx(0.04)
    assert mpc_run.metadata.n_samples == 40_000
    assert mpc_run.metadata.n_decisions == 1334
    assert not mpc_run.metadata.diverged
    assert mpc_run.controller_kind == "mpc"
    assert mpc_run.sample_period == pytest.approx(1e-6)


def test_mpc_tracks_reference(mpc_run) -> None:  # noqa: ANN001
    """Test current tracking and capacitor balancing in steady state"""
    last = mpc_run.frame.iloc[-20_000:]
    for ph in "abc":
        err = last[f"i_{ph}"] - last[f"iref_{ph}"]
        # 5 % of the 10 A amplitude
        assert np.sqrt(np.mean(err**2)) < 0.5
        assert last[f"v1_{ph}"].between(110, 130).all()
        assert last[f"v2_{ph}"].between(230, 250).all()
    assert tracking_rms_error(mpc_run, cycles=1) < 0.5
    npt.assert_allclose(
        last[["iref_a", "iref_b", "iref_c"]].sum(axis=1), 0, atol=1e-9
    )


def test_switches_only_at_decisions(mpc_run) -> None:  # noqa: ANN001
    """Test that states are held for a whole controller period"""
    states = mpc_run.frame["state_a"].to_numpy()
    changes = np.flatnonzero(np.diff(states)) + 1
    assert np.all(changes % 30 == 0)


def test_deterministic() -> None:
    """Test that equal scripts give identical runs"""
    script = RunScript(scenario=_scenario(0.005))
    a = run_closed_loop(script)
    b = run_closed_loop(script)
    pd.testing.assert_frame_equal(a.frame, b.frame)
    assert a.metadata.config_hash == b.metadata.config_hash


def test_zero_reference() -> None:
    """Test that a null current reference keeps the load at rest"""
    run = run_closed_loop(RunScript(scenario=_scenario(0.005, iref_amp=0.0)))
    assert not run.metadata.diverged
    assert run.frame[["i_a", "i_b", "i_c"]].abs().to_numpy().max() < 0.1


def _replay(params: SystemParams, decisions: np.ndarray) -> pd.DataFrame:
    rec = PlantRecorder()
    state = init_plant(params)
    for d in decisions:
        state = step_plant(state, d, params, rec)
    return rec.to_frame()


def test_substep_convergence() -> None:
    """Test first-order convergence of the plant under closed-loop switching"""
    run = run_closed_loop(RunScript(scenario=_scenario(0.0045)))
    decisions = run.frame[["state_a", "state_b", "state_c"]].to_numpy()[::30]
    assert len(decisions) == 150
    cols = ["i_a", "i_b", "i_c"]
    coarse = _replay(SystemParams(), decisions)
    npt.assert_array_equal(coarse[cols], run.frame[cols])

    half = _replay(SystemParams(plant_substep=5e-7), decisions).iloc[1::2]
    fine = _replay(SystemParams(plant_substep=2.5e-7), decisions).iloc[3::4]
    npt.assert_allclose(half["t"], coarse["t"])
    npt.assert_allclose(fine["t"], coarse["t"])
    err_coarse = np.abs(coarse[cols].to_numpy() - fine[cols].to_numpy()).max()
    err_half = np.abs(half[cols].to_numpy() - fine[cols].to_numpy()).max()
    assert np.abs(coarse[cols].to_numpy() - half[cols].to_numpy()).max() < 5e-3
    # errors of h and h/2 against h/4 are 3/4 and 1/4 of the leading term
    assert 2.5 < err_coarse / err_half < 3.5


def test_reference_step_event() -> None:
    """Test an amplitude step that falls inside a controller period"""
    steps: list[ControlStep] = []
    script = RunScript(
        scenario=_scenario(0.02),
        events=(ScheduledEvent(time=0.010005, kind="set_iref_amp", value=5.0),),
    )
    run = run_closed_loop(script, observer=steps.append)
    assert run.metadata.n_decisions == 667
    k_after = next(s.k for s in steps if s.state.t > 0.010005)
    assert np.max(np.abs(steps[k_after - 1].i_ref)) > 5.0
    assert np.max(np.abs(steps[k_after].i_ref)) <= 5.0
    t = run.frame["t"].to_numpy()
    iref = run.frame[["iref_a", "iref_b", "iref_c"]].abs().max(axis=1).to_numpy()
    assert np.all(iref[t > 0.0101] <= 5.0 + 1e-9)
    assert iref[(t > 0.0045) & (t < 0.0055)].max() > 9.0


def test_plant_event_keeps_controller_model() -> None:
    """Test that a plant change is not seen by the controller model"""
    steps: list[ControlStep] = []
    script = RunScript(
        scenario=_scenario(0.004),
        events=(ScheduledEvent(time=0.002, kind="set_plant_l", value=5e-3),),
    )
    run_closed_loop(script, observer=steps.append)
    assert steps[0].plant.l == pytest.approx(10e-3)
    assert steps[-1].plant.l == pytest.approx(5e-3)
    assert steps[-1].model.l == pytest.approx(10e-3)


def test_model_mismatch_config() -> None:
    """Test a controller model that differs from the plant from the start"""
    steps: list[ControlStep] = []
    config = ControllerConfig(model_l="5 mH")
    script = RunScript(
        controller=MpcControllerSpec(config=config), scenario=_scenario(0.001)
    )
    run_closed_loop(script, observer=steps.append)
    assert steps[0].model.l == pytest.approx(5e-3)
    assert steps[0].plant.l == pytest.approx(10e-3)


@pytest.mark.parametrize(
    "events",
    [
        pytest.param(
            [{"time": 0.002, "kind": "set_iref_amp", "value": 1.0}] * 2, id="repeated"
        ),
        pytest.param([{"time": 0.5, "kind": "set_iref_amp", "value": 1.0}], id="late"),
        pytest.param([{"time": 0.1, "kind": "set_plant_l", "value": 0.0}], id="zero-l"),
        pytest.param(
            [{"time": 0.1, "kind": "set_iref_amp", "value": -1}], id="neg-iref"
        ),
        pytest.param([{"time": 0.1, "kind": "set_vdc", "value": 1}], id="unknown"),
    ],
)
def test_invalid_events(events: list[dict]) -> None:
    """Test rejected event scripts"""
    with pytest.raises(pydantic.ValidationError):
        RunScript.model_validate({"events": events})


def test_divergence_is_reported() -> None:
    """Test that an unstable plant ends the run with a diagnostic"""
    run = run_closed_loop(RunScript(scenario=_scenario(0.005, l=5e-6)))
    assert run.metadata.diverged
    assert "non-finite" in (run.metadata.diagnostic or "")
    assert len(run.frame) < 5000
    assert np.isfinite(run.frame.to_numpy()).all()


def test_write_read(tmp_path: Path) -> None:
    """Test the CSV and sidecar of a run"""
    run = run_closed_loop(RunScript(scenario=_scenario(0.002)))
    path = run.write(tmp_path / "run.csv")
    assert (tmp_path / "run.meta.yaml").exists()
    back = read_run(path)
    pd.testing.assert_frame_equal(back.frame, run.frame)
    assert back.metadata == run.metadata


@pytest.fixture
def x2_model():  # noqa: ANN201
    """An untrained X2 classifier"""
    return init_model(15, 6, np.random.default_rng(0), variant=FeatureVariant.X2)


def _meas() -> PlantState:
    return PlantState(
        i=np.array([2.0, -1.0, -1.0]),
        v1=np.array([119.0, 121.0, 120.5]),
        v2=np.array([241.0, 239.0, 240.0]),
    )


def test_ann_control_step(x2_model) -> None:  # noqa: ANN001
    """Test that the classifier's argmax is applied per leg"""
    refs = [References.balanced(x, 360.0) for x in (5.0, -2.5, -2.5)]
    states = ann_control_step(x2_model, _meas(), refs, [0, 3, 7])
    meas = _meas()
    x = feature_matrix(
        "X2",
        v1=meas.v1,
        v2=meas.v2,
        i=meas.i,
        i_ref=[5.0, -2.5, -2.5],
        v1_ref=120.0,
        v2_ref=240.0,
        s_opt_prev=[0, 3, 7],
    )
    npt.assert_array_equal([s.index for s in states], predict_classes(x2_model, x))


def test_ann_control_step_x1_needs_vdc() -> None:
    """Test that the X1 phase-voltage feature needs the dc-link voltage"""
    model = init_model(16, 4, np.random.default_rng(0), variant=FeatureVariant.X1)
    refs = [References.balanced(0.0, 360.0)] * 3
    with pytest.raises(ValueError, match="vdc"):
        ann_control_step(model, _meas(), refs, [0, 0, 0])
    assert len(ann_control_step(model, _meas(), refs, [0, 0, 0], vdc=360.0)) == 3


def _constant_model(cls: int) -> MlpModel:
    """Classifier that always predicts ``cls``"""
    m = init_model(15, 3, np.random.default_rng(0), variant=FeatureVariant.X2)
    bias = np.zeros(8)
    bias[cls] = 10.0
    return m.model_copy(
        update={"w_output": np.zeros_like(m.w_output), "b_output": bias}
    )


def test_constant_classifier() -> None:
    """Test that a constant class-7 policy applies (1,1,1) on every leg"""
    model = _constant_model(7)
    refs = [References.balanced(x, 360.0) for x in (5.0, -2.5, -2.5)]
    states = ann_control_step(model, _meas(), refs, [0, 3, 7])
    assert all((s.s1, s.s2, s.s3) == (1, 1, 1) for s in states)

    script = RunScript(controller=AnnControllerSpec(), scenario=_scenario(0.003))
    run = run_closed_loop(script, model)
    for ph in "abc":
        assert set(run.frame[f"state_{ph}"]) == {7}
    npt.assert_array_equal(run.frame[["i_a", "i_b", "i_c"]], 0.0)


def test_ann_replay_matches_dataset(x2_model) -> None:  # noqa: ANN001
    """Test classifier replay of expert steps against the stored labels"""
    scenario = _scenario(0.003).model_copy(update={"transient": 0.0})
    steps: list[ControlStep] = []
    run_closed_loop(RunScript(scenario=scenario), observer=steps.append)
    frame, _ = generate_dataset([scenario], FeatureVariant.X2)
    first, n = recorded_steps(scenario)
    expert = steps[first:n]

    replayed = []
    for step in expert:
        refs = [References.balanced(float(r), 360.0) for r in step.i_ref]
        chosen = ann_control_step(x2_model, step.state, refs, step.previous)
        replayed.extend(s.index for s in chosen)

    data = LabeledSet.from_frame(frame, FeatureVariant.X2)
    npt.assert_array_equal(data.y, np.concatenate([s.chosen for s in expert]))
    npt.assert_array_equal(replayed, predict_classes(x2_model, data.x))
    agreement = np.mean(np.array(replayed) == data.y)
    assert agreement == pytest.approx(evaluate(x2_model, data).accuracy)


def test_ann_run(x2_model, tmp_path: Path) -> None:  # noqa: ANN001
    """Test an ANN run with the model loaded from its path"""
    path = save_model(x2_model, tmp_path / "m.json")
    script = RunScript(
        controller=AnnControllerSpec(model_path=path), scenario=_scenario(0.002)
    )
    run = run_closed_loop(script)
    assert run.controller_kind == "ann"
    assert run.metadata.model_variant is FeatureVariant.X2
    assert run.frame["state_b"].between(0, 7).all()


def test_ann_run_errors(x2_model) -> None:  # noqa: ANN001
    """Test missing models and mismatched variants"""
    with pytest.raises(ModelMismatchError):
        run_closed_loop(
            RunScript(controller=AnnControllerSpec(), scenario=_scenario(0.001))
        )
    script = RunScript(
        controller=AnnControllerSpec(variant="X3"), scenario=_scenario(0.001)
    )
    with pytest.raises(ModelMismatchError):
        run_closed_loop(script, x2_model)
