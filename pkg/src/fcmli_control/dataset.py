"""Expert-labeled training corpus

The predictive controller is run in closed loop under each scenario. Every
controller period contributes one record per leg: the leg's features at the
sampling instant and, as label, the state the expert applied from that
instant on.
"""

from __future__ import annotations

import concurrent.futures
import logging
import math
import typing as ty
from pathlib import Path

import numpy as np
import pandas as pd
import pydantic
from tqdm.auto import tqdm

from .ann.training import LABEL_COLUMN
from .config import config_hash, dump_yaml, read_yaml
from .controller import ControlStep, MpcControllerSpec, RunScript, run_closed_loop
from .features import N_STATES, FeatureVariant, feature_matrix
from .mpc import (
    ControllerConfig,
    PhaseMeasurement,
    PredictorConstants,
    References,
    common_mode_for_candidates,
    other_legs_pole_sum,
    select_optimal,
)
from .plant import PHASES, common_mode_voltage, phase_output_voltage
from .scenarios import ScenarioConfig

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1

META_COLUMNS = ("scenario_id", "phase", "step", "t")
SNAPSHOT_COLUMNS = ("v1", "v2", "i_ref", "i", "s_opt_prev")
AUX_COLUMNS = ("vdc", "v_on_others")


def dataset_columns(variant: str | FeatureVariant) -> list[str]:
    """Column order of a dataset file

    Metadata, the variant's features, the snapshot quantities the variant
    lacks, the audit inputs and finally the label.
    """
    variant = FeatureVariant.parse(variant)
    extra = [c for c in SNAPSHOT_COLUMNS if c not in variant.columns]
    return [*META_COLUMNS, *variant.columns, *extra, *AUX_COLUMNS, LABEL_COLUMN]


class DatasetManifest(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Description of a generated dataset

    ``counts`` holds the records per scenario; scenarios that diverged have
    zero records and an entry in ``failures``.
    """

    format_version: ty.Literal[1] = DATASET_FORMAT_VERSION
    variant: FeatureVariant
    columns: list[str]
    controller: ControllerConfig
    scenarios: list[ScenarioConfig]
    counts: dict[str, int]
    failures: dict[str, str] = {}
    class_histogram: list[int] = pydantic.Field(
        min_length=N_STATES, max_length=N_STATES
    )
    n_records: int = pydantic.Field(ge=0)
    seed: int = 0
    config_hash: str


class _Collector:
    """Observer turning control steps into per-leg records"""

    def __init__(self, first_step: int, n_steps: int) -> None:
        self._first = first_step
        self._n = n_steps
        self.rows: list[tuple[ty.Any, ...]] = []

    def __call__(self, step: ControlStep) -> None:
        if not self._first <= step.k < self._n:
            return
        vdc = step.model.vdc
        s = step.state
        others = other_legs_pole_sum(s, step.previous, vdc)
        self.rows.append(
            (
                step.k,
                s.t,
                s.i.copy(),
                s.v1.copy(),
                s.v2.copy(),
                step.i_ref.copy(),
                step.previous.copy(),
                step.chosen.copy(),
                vdc,
                others,
            )
        )


def recorded_steps(scenario: ScenarioConfig) -> tuple[int, int]:
    """First recorded controller step and the number of complete periods

    Steps inside the transient are skipped, as is a trailing period that the
    run's duration cuts short.
    """
    params = scenario.resolve()
    h = params.plant_substep
    n_sub = params.substeps_per_period
    n_steps = round(scenario.duration / h) // n_sub
    first = math.ceil(round(scenario.transient / h) / n_sub)
    return first, n_steps


def expected_records(scenario: ScenarioConfig) -> int:
    """Number of records a scenario contributes if it does not diverge"""
    first, n_steps = recorded_steps(scenario)
    return 3 * max(0, n_steps - first)


def _scenario_records(
    scenario: ScenarioConfig,
    variant: FeatureVariant,
    config: ControllerConfig,
) -> tuple[pd.DataFrame, str | None]:
    """Records of one scenario; the diagnostic is set if the run diverged"""
    collector = _Collector(*recorded_steps(scenario))
    script = RunScript(controller=MpcControllerSpec(config=config), scenario=scenario)
    run = run_closed_loop(script, observer=collector, record=False)
    columns = dataset_columns(variant)
    if run.metadata.diverged:
        return pd.DataFrame(columns=columns), run.metadata.diagnostic
    if not collector.rows:
        return pd.DataFrame(columns=columns), None

    k, t, i, v1, v2, i_ref, prev, chosen, vdc, others = (
        np.array(col) for col in zip(*collector.rows)
    )
    n = len(k)
    v1_ref = vdc / 3
    v_ph = None
    if variant is FeatureVariant.X1:
        # load voltage of the previously applied state
        pole = phase_output_voltage(prev, v1, v2, vdc[:, np.newaxis])
        v_on = common_mode_voltage(pole[:, 0], pole[:, 1], pole[:, 2])
        v_ph = pole - v_on[:, np.newaxis]
    features = feature_matrix(
        variant,
        v1=v1,
        v2=v2,
        i=i,
        i_ref=i_ref,
        v1_ref=v1_ref[:, np.newaxis],
        v2_ref=2 * v1_ref[:, np.newaxis],
        s_opt_prev=prev,
        v_ph=v_ph,
    )

    data: dict[str, ty.Any] = {
        "scenario_id": np.full(3 * n, scenario.scenario_id, dtype=object),
        "phase": np.tile(np.array(PHASES, dtype=object), n),
        "step": np.repeat(k, 3),
        "t": np.repeat(t, 3),
    }
    for c, name in enumerate(variant.columns):
        data[name] = features[:, :, c].ravel()
    snapshot = {"v1": v1, "v2": v2, "i_ref": i_ref, "i": i, "s_opt_prev": prev}
    for name in SNAPSHOT_COLUMNS:
        if name not in data:
            data[name] = snapshot[name].ravel()
    data["vdc"] = np.repeat(vdc, 3)
    data["v_on_others"] = others.ravel()
    data[LABEL_COLUMN] = chosen.ravel()

    frame = pd.DataFrame(data, columns=columns)
    frame["s_opt_prev"] = frame["s_opt_prev"].astype(np.int64)
    return frame, None


def _class_histogram(labels: pd.Series) -> list[int]:
    return np.bincount(labels.to_numpy(dtype=np.int64), minlength=N_STATES).tolist()


def generate_dataset(
    scenarios: ty.Sequence[ScenarioConfig],
    variant: str | FeatureVariant,
    config: ControllerConfig | None = None,
    *,
    seed: int = 0,
    workers: int = 1,
    progress: bool = False,
) -> tuple[pd.DataFrame, DatasetManifest]:
    """Run the expert under each scenario and collect labeled records

    Records from a scenario's transient (``scenario.transient``) are dropped,
    as are controller periods that do not complete within the run. Scenarios
    may run in parallel; the result is ordered by scenario (input order),
    then step, then leg.

    Returns
    -------
    tuple[pandas.DataFrame, DatasetManifest]
        Records in `dataset_columns` order and their manifest
    """
    variant = FeatureVariant.parse(variant)
    config = config or ControllerConfig()
    columns = dataset_columns(variant)

    if workers > 1 and len(scenarios) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_scenario_records, s, variant, config) for s in scenarios
            ]
            it = tqdm(futures, desc="scenarios", disable=not progress)
            results = [f.result() for f in it]
    else:
        it = tqdm(scenarios, desc="scenarios", disable=not progress)
        results = [_scenario_records(s, variant, config) for s in it]

    counts: dict[str, int] = {}
    failures: dict[str, str] = {}
    frames = []
    for scenario, (frame, diagnostic) in zip(scenarios, results):
        counts[scenario.scenario_id] = len(frame)
        if diagnostic is not None:
            failures[scenario.scenario_id] = diagnostic
            logger.error("scenario %s failed: %s", scenario.scenario_id, diagnostic)
        else:
            logger.info("scenario %s: %d records", scenario.scenario_id, len(frame))
            frames.append(frame)

    nonempty = [f for f in frames if len(f)]
    data = (
        pd.concat(nonempty, ignore_index=True)
        if nonempty
        else pd.DataFrame(columns=columns)
    )
    histogram = _class_histogram(data[LABEL_COLUMN]) if len(data) else [0] * N_STATES
    logger.info("class histogram V0..V7: %s", histogram)
    missing = [f"V{c}" for c, n in enumerate(histogram) if n == 0]
    if len(data) and missing:
        logger.warning("classes absent from the dataset: %s", ", ".join(missing))

    echo = {
        "variant": variant.value,
        "controller": config.model_dump(mode="json"),
        "scenarios": [s.model_dump(mode="json") for s in scenarios],
        "seed": seed,
    }
    manifest = DatasetManifest(
        variant=variant,
        columns=columns,
        controller=config,
        scenarios=list(scenarios),
        counts=counts,
        failures=failures,
        class_histogram=histogram,
        n_records=len(data),
        seed=seed,
        config_hash=config_hash(echo),
    )
    return data, manifest


def manifest_path(path: str | Path) -> Path:
    """Manifest path of a dataset CSV"""
    return Path(path).with_suffix(".manifest.yaml")


def write_dataset(
    frame: pd.DataFrame, manifest: DatasetManifest, path: str | Path
) -> Path:
    """Write the dataset CSV and its ``<name>.manifest.yaml``"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    dump_yaml(manifest, manifest_path(path))
    logger.info("wrote %d records to %s", len(frame), path)
    return path


def read_dataset(path: str | Path) -> tuple[pd.DataFrame, DatasetManifest]:
    """Read a dataset written by `write_dataset`"""
    manifest = DatasetManifest.model_validate(read_yaml(manifest_path(path)))
    frame = pd.read_csv(
        path,
        float_precision="round_trip",
        dtype={"scenario_id": str, "phase": str},
        keep_default_na=False,
    )
    return frame, manifest


class SplitSpec(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Fractions of the train, validation and test partitions

    Validation and test sizes are rounded down; the remainder goes to
    training.
    """

    train: float = pydantic.Field(default=0.70, ge=0, le=1)
    val: float = pydantic.Field(default=0.15, ge=0, le=1)
    test: float = pydantic.Field(default=0.15, ge=0, le=1)
    seed: int = 0

    @pydantic.model_validator(mode="after")
    def _check_sum(self) -> SplitSpec:
        total = self.train + self.val + self.test
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            msg = f"split fractions must sum to 1, got {total}"
            raise ValueError(msg)
        return self

    def sizes(self, n: int) -> tuple[int, int, int]:
        """Partition sizes for ``n`` records"""
        n_val = math.floor(n * self.val + 1e-9)
        n_test = math.floor(n * self.test + 1e-9)
        return n - n_val - n_test, n_val, n_test


def split_dataset(
    frame: pd.DataFrame, spec: SplitSpec | None = None
) -> tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """Seeded shuffle, then partition into train, validation and test

    Raises
    ------
    ValueError
        If the dataset is empty
    """
    spec = spec or SplitSpec()
    n = len(frame)
    if n == 0:
        msg = "cannot split an empty dataset"
        raise ValueError(msg)
    n_train, n_val, _ = spec.sizes(n)
    order = np.random.default_rng(spec.seed).permutation(n)
    parts = np.split(order, [n_train, n_train + n_val])
    train, val, test = (frame.iloc[p].reset_index(drop=True) for p in parts)
    logger.info("split %d records into %d/%d/%d", n, len(train), len(val), len(test))
    return train, val, test


class LabelAudit(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Outcome of re-labeling a sample of records offline"""

    checked: int
    mismatches: int
    mismatch_rows: list[int] = []

    @property
    def ok(self) -> bool:
        """No record disagreed with the expert"""
        return self.mismatches == 0


def audit_labels(
    frame: pd.DataFrame,
    manifest: DatasetManifest,
    fraction: float = 0.01,
    seed: int = 0,
) -> LabelAudit:
    """Re-run the expert's selection on a random sample of stored snapshots

    At least one record is checked when the dataset is non-empty.
    """
    n = len(frame)
    if n == 0:
        return LabelAudit(checked=0, mismatches=0)
    size = min(n, max(1, math.ceil(fraction * n)))
    rows = np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))

    weights = manifest.controller.weights
    models = {
        s.scenario_id: manifest.controller.model_params(s.resolve())
        for s in manifest.scenarios
    }
    consts = {sid: PredictorConstants.from_params(p) for sid, p in models.items()}

    bad = []
    for r in rows:
        rec = frame.iloc[int(r)]
        sid = str(rec["scenario_id"])
        model = models[sid]
        vdc = float(rec["vdc"])
        meas = PhaseMeasurement(float(rec["i"]), float(rec["v1"]), float(rec["v2"]))
        refs = References.balanced(float(rec["i_ref"]), vdc)
        v_on = common_mode_for_candidates(
            meas.v1, meas.v2, vdc, float(rec["v_on_others"])
        )
        state, _ = select_optimal(meas, refs, weights, consts[sid], model, v_on)
        if state.index != int(rec[LABEL_COLUMN]):
            bad.append(int(r))
    if bad:
        logger.warning(
            "%d of %d audited labels disagree with the expert", len(bad), size
        )
    return LabelAudit(checked=size, mismatches=len(bad), mismatch_rows=bad)
