"""Closed-loop sequencing of a controller against the plant

A run alternates one control decision per controller period with plant
sub-stepping. Scripted events change the reference amplitude, the plant or
(for ablations) the controller's internal model while the run is in progress.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import typing as ty
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
import pydantic
from numpy.typing import NDArray

from .ann.model import MlpModel, load_model, predict_classes
from .config import config_hash, dump_yaml, read_yaml
from .errors import ModelMismatchError, SimulationDivergedError
from .features import FeatureVariant, feature_matrix
from .mpc import (
    ControllerConfig,
    PredictorConstants,
    References,
    mpc_decide,
    reference_currents,
)
from .plant import (
    ALL_STATES,
    PHASES,
    PlantRecorder,
    PlantState,
    SwitchingState,
    SystemParams,
    init_plant,
    phase_voltages,
    step_plant,
)
from .scenarios import NOMINAL, ScenarioConfig
from .validation import NonNegativeSeconds

logger = logging.getLogger(__name__)

RUN_FORMAT_VERSION = 1

EventKind = ty.Literal[
    "set_iref_amp",
    "set_plant_l",
    "set_plant_r",
    "set_model_l",
    "set_model_r",
]


class ScheduledEvent(pydantic.BaseModel, frozen=True, extra="forbid"):
    """A parameter change at a given time

    ``set_plant_*`` events change the plant only; the controller keeps its
    model unless a ``set_model_*`` event is scripted as well.
    """

    time: NonNegativeSeconds
    kind: EventKind
    value: float = pydantic.Field(allow_inf_nan=False)

    @pydantic.model_validator(mode="after")
    def _check_value(self) -> ScheduledEvent:
        if self.kind == "set_iref_amp":
            if self.value < 0:
                msg = f"reference amplitude must be >= 0, got {self.value}"
                raise ValueError(msg)
        elif self.value <= 0:
            msg = f"{self.kind} needs a positive value, got {self.value}"
            raise ValueError(msg)
        return self


class MpcControllerSpec(pydantic.BaseModel, frozen=True, extra="forbid"):
    """The predictive controller"""

    kind: ty.Literal["mpc"] = "mpc"
    config: ControllerConfig = ControllerConfig()


class AnnControllerSpec(pydantic.BaseModel, frozen=True, extra="forbid"):
    """The trained classifier, loaded from ``model_path`` unless supplied in code"""

    kind: ty.Literal["ann"] = "ann"
    model_path: Path | None = None
    variant: FeatureVariant = FeatureVariant.X2


ControllerSpec = ty.Annotated[
    MpcControllerSpec | AnnControllerSpec, pydantic.Field(discriminator="kind")
]


class RunScript(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Everything needed to reproduce one closed-loop run"""

    controller: ControllerSpec = MpcControllerSpec()
    scenario: ScenarioConfig = NOMINAL
    events: tuple[ScheduledEvent, ...] = ()
    analysis_cycles: pydantic.PositiveInt = 5

    @pydantic.model_validator(mode="after")
    def _check_events(self) -> RunScript:
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            msg = f"event times must be strictly increasing, got {times}"
            raise ValueError(msg)
        if times and times[-1] > self.scenario.duration:
            msg = (
                f"event at {times[-1]} s lies beyond the "
                f"{self.scenario.duration} s run"
            )
            raise ValueError(msg)
        return self


class RunMetadata(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Sidecar describing a recorded run"""

    format_version: ty.Literal[1] = RUN_FORMAT_VERSION
    script: RunScript
    params: SystemParams
    config_hash: str
    model_variant: FeatureVariant | None = None
    n_samples: int = 0
    n_decisions: int = 0
    diverged: bool = False
    diagnostic: str | None = None


@dataclasses.dataclass(frozen=True)
class TimeSeriesRun:
    """Recorded plant channels and references, one row per plant sub-step"""

    frame: pd.DataFrame
    metadata: RunMetadata

    @property
    def sample_period(self) -> float:
        """Recording interval [s]"""
        return self.metadata.params.plant_substep

    @property
    def f0(self) -> float:
        """Fundamental frequency [Hz]"""
        return self.metadata.params.f0

    @property
    def scenario_id(self) -> str:
        """Id of the simulated scenario"""
        return self.metadata.script.scenario.scenario_id

    @property
    def controller_kind(self) -> str:
        """``"mpc"`` or ``"ann"``"""
        return self.metadata.script.controller.kind

    def write(self, path: str | Path) -> Path:
        """Write the CSV and its ``<name>.meta.yaml`` sidecar"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False)
        dump_yaml(self.metadata, metadata_path(path))
        logger.info(
            "wrote run %s (%d samples) to %s",
            self.scenario_id,
            len(self.frame),
            path,
        )
        return path


def metadata_path(path: str | Path) -> Path:
    """Sidecar path of a run CSV"""
    return Path(path).with_suffix(".meta.yaml")


def read_run(path: str | Path) -> TimeSeriesRun:
    """Read a run written by `TimeSeriesRun.write`"""
    frame = pd.read_csv(path, float_precision="round_trip")
    metadata = RunMetadata.model_validate(read_yaml(metadata_path(path)))
    return TimeSeriesRun(frame=frame, metadata=metadata)


class ControlStep(ty.NamedTuple):
    """What a controller saw and decided at one sampling instant"""

    k: int
    state: PlantState
    i_ref: NDArray
    previous: NDArray
    chosen: NDArray
    plant: SystemParams
    model: SystemParams


Observer = Callable[[ControlStep], None]


def ann_control_step(
    model: MlpModel,
    meas: PlantState,
    refs: Sequence[References],
    s_opt_prev: Sequence[SwitchingState] | NDArray,
    *,
    vdc: float | None = None,
    variant: str | FeatureVariant | None = None,
) -> tuple[SwitchingState, SwitchingState, SwitchingState]:
    """Switching states chosen by the classifier for the three legs

    No plant model and no cost function are evaluated: each leg's features go
    through the network and the most probable state is applied. ``vdc`` is
    required for X1 models, whose phase-voltage feature is the load voltage of
    ``s_opt_prev`` at the measured capacitor voltages.

    Raises
    ------
    ModelMismatchError
        If ``variant`` is not the model's feature variant
    """
    prev = np.array(
        [s.index if isinstance(s, SwitchingState) else int(s) for s in s_opt_prev],
        dtype=np.int64,
    )
    requested = None if variant is None else FeatureVariant.parse(variant)
    resolved = model.variant or requested
    if requested is not None and resolved is not requested:
        msg = f"model was trained on {resolved} features, got {variant}"
        raise ModelMismatchError(msg)
    if resolved is None:
        msg = "the model records no feature variant and none was given"
        raise ModelMismatchError(msg)

    v_ph = None
    if resolved is FeatureVariant.X1:
        if vdc is None:
            msg = "vdc is required for X1 features"
            raise ValueError(msg)
        v_ph = phase_voltages(prev, meas.v1, meas.v2, vdc)
    x = feature_matrix(
        resolved,
        v1=meas.v1,
        v2=meas.v2,
        i=meas.i,
        i_ref=[r.i_ref for r in refs],
        v1_ref=[r.v1_ref for r in refs],
        v2_ref=[r.v2_ref for r in refs],
        s_opt_prev=prev,
        v_ph=v_ph,
    )
    chosen = predict_classes(model, x, resolved)
    return ty.cast(
        "tuple[SwitchingState, SwitchingState, SwitchingState]",
        tuple(ALL_STATES[int(c)] for c in chosen),
    )


def _event_tick(time: float, substep: float) -> int:
    """First sub-step boundary at or after ``time``"""
    return math.ceil(time / substep - 1e-9)


class _Policy(ty.Protocol):
    def __call__(
        self,
        k: int,
        state: PlantState,
        i_ref: NDArray,
        previous: NDArray,
        model: SystemParams,
    ) -> NDArray: ...


def _mpc_policy(config: ControllerConfig) -> _Policy:
    weights = config.weights
    consts_cache: dict[tuple[float, float, float], PredictorConstants] = {}

    def policy(
        _k: int,
        state: PlantState,
        i_ref: NDArray,
        previous: NDArray,
        model: SystemParams,
    ) -> NDArray:
        key = (model.r, model.l, model.ts)
        consts = consts_cache.get(key)
        if consts is None:
            consts = consts_cache[key] = PredictorConstants.from_params(model)
        refs = [References.balanced(float(r), model.vdc) for r in i_ref]
        return mpc_decide(state, refs, weights, consts, model, previous).indices

    return policy


def _ann_policy(model_: MlpModel, variant: FeatureVariant) -> _Policy:
    def policy(
        _k: int,
        state: PlantState,
        i_ref: NDArray,
        previous: NDArray,
        model: SystemParams,
    ) -> NDArray:
        refs = [References.balanced(float(r), model.vdc) for r in i_ref]
        states = ann_control_step(
            model_, state, refs, previous, vdc=model.vdc, variant=variant
        )
        return np.array([s.index for s in states], dtype=np.int64)

    return policy


def run_closed_loop(
    script: RunScript,
    model: MlpModel | None = None,
    *,
    observer: Observer | None = None,
    record: bool = True,
) -> TimeSeriesRun:
    """Simulate the scripted run

    The decision computed at sampling instant ``k`` is applied over
    ``[k, k+1)``; every leg starts from V0. Events take effect at the first
    plant sub-step boundary at or after their time, splitting the controller
    period they fall in. A numerical blow-up ends the run early; the partial
    run is returned with the diagnostic in its metadata.

    Parameters
    ----------
    script : RunScript
        Controller, scenario and events
    model : MlpModel | None
        Classifier for ANN runs; loaded from the script's model path if omitted
    observer : Observer | None
        Called after every control decision
    record : bool
        Whether to record the sub-step time series

    Returns
    -------
    TimeSeriesRun
        The recorded channels plus ``iref_a``, ``iref_b``, ``iref_c``
    """
    spec = script.controller
    plant = script.scenario.resolve()
    start_params = plant
    variant = None
    if isinstance(spec, MpcControllerSpec):
        controller_model = spec.config.model_params(plant)
        policy = _mpc_policy(spec.config)
    else:
        if model is None:
            if spec.model_path is None:
                msg = "an ANN run needs a model or a model_path"
                raise ModelMismatchError(msg)
            model = load_model(spec.model_path)
        variant = spec.variant
        controller_model = plant
        policy = _ann_policy(model, variant)

    h = plant.plant_substep
    n_sub = plant.substeps_per_period
    total = round(script.scenario.duration / h)
    events = sorted(
        ((_event_tick(e.time, h), e) for e in script.events), key=lambda x: x[0]
    )
    iref_amp = plant.iref_amp

    recorder = PlantRecorder(capacity=total) if record else None
    amplitude = np.zeros(total)
    state = init_plant(plant)
    applied = np.zeros(3, dtype=np.int64)
    next_control = 0
    k = 0
    diagnostic = None
    logger.debug(
        "run %s: %s controller, %d sub-steps, %d events",
        script.scenario.scenario_id,
        spec.kind,
        total,
        len(events),
    )

    tick = 0
    while tick < total:
        while events and events[0][0] <= tick:
            _, event = events.pop(0)
            if event.kind == "set_iref_amp":
                iref_amp = event.value
            elif event.kind.startswith("set_plant_"):
                plant = plant.model_copy(
                    update={event.kind.removeprefix("set_plant_"): event.value}
                )
            else:
                controller_model = controller_model.model_copy(
                    update={event.kind.removeprefix("set_model_"): event.value}
                )
            logger.info("t=%.6g s: %s -> %g", tick * h, event.kind, event.value)

        if tick == next_control:
            i_ref = reference_currents(tick * h, iref_amp, plant.f0)
            previous = applied
            applied = policy(k, state, i_ref, previous, controller_model)
            if observer is not None:
                observer(
                    ControlStep(
                        k, state, i_ref, previous, applied, plant, controller_model
                    )
                )
            next_control += n_sub
            k += 1

        stop = min(next_control, total, events[0][0] if events else total)
        amplitude[tick:stop] = iref_amp
        try:
            state = step_plant(state, applied, plant, recorder, substeps=stop - tick)
        except SimulationDivergedError as e:
            diagnostic = str(e)
            logger.warning("run %s diverged: %s", script.scenario.scenario_id, e)
            break
        tick = stop

    frame = pd.DataFrame()
    if recorder is not None:
        frame = recorder.to_frame()
        refs = reference_currents(frame["t"].to_numpy(), 1.0, start_params.f0)
        refs *= amplitude[: len(frame), np.newaxis]
        for x, ph in enumerate(PHASES):
            frame[f"iref_{ph}"] = refs[:, x]

    metadata = RunMetadata(
        script=script,
        params=start_params,
        config_hash=config_hash(script),
        model_variant=variant,
        n_samples=len(frame),
        n_decisions=k,
        diverged=diagnostic is not None,
        diagnostic=diagnostic,
    )
    return TimeSeriesRun(frame=frame, metadata=metadata)
