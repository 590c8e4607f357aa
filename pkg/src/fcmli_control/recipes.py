"""Experiment recipes that emit plot-ready CSV for every table and figure

Each recipe is self-contained: it builds its run scripts, executes them and
writes its artifacts under the output directory. Recipes that exercise the
classifier need a trained model.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import logging
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from .analysis import compare_runs, run_thd, settling_time, spectrum
from .ann.model import MlpModel, load_model, save_model
from .ann.training import LabeledSet, TrainConfig, train
from .config import config_hash, dump_yaml
from .controller import (
    AnnControllerSpec,
    MpcControllerSpec,
    RunScript,
    ScheduledEvent,
    TimeSeriesRun,
    run_closed_loop,
)
from .dataset import (
    SplitSpec,
    expected_records,
    generate_dataset,
    split_dataset,
    write_dataset,
)
from .errors import ModelMismatchError
from .features import FeatureVariant
from .mpc import ControllerConfig
from .plant import PHASES, switching_table
from .scenarios import (
    BUILTIN_SCENARIOS,
    FEATURE_STUDY_SCENARIOS,
    FIG13_SCENARIO_IDS,
    NOMINAL,
    NOMINAL_PARAMS,
    TRAINING_CONDITIONS,
    ScenarioConfig,
)

logger = logging.getLogger(__name__)

STEADY_STATE_DURATION = 0.2
STEP_TIME = 0.05
STEP_IREF = 5.0
MISMATCH_TIME = 0.1
MISMATCH_L = 5e-3
MISMATCH_DURATION = 0.3
WAVEFORM_CYCLES = 2


@dataclasses.dataclass(frozen=True)
class RecipeContext:
    """Inputs shared by all recipes"""

    out: Path
    models: tuple[MlpModel, ...] = ()
    variant: FeatureVariant = FeatureVariant.X2
    controller: ControllerConfig = ControllerConfig()
    train_config: TrainConfig = TrainConfig()
    seed: int = 0
    workers: int = 1
    duration: float | None = None
    progress: bool = False

    def model_for(self, variant: FeatureVariant | None = None) -> MlpModel:
        """The supplied model of ``variant`` (default: the context variant)"""
        variant = variant or self.variant
        for m in self.models:
            if m.variant is variant:
                return m
        if len(self.models) == 1 and self.models[0].variant is None:
            return self.models[0]
        msg = f"this recipe needs a trained {variant.value} model (--model)"
        raise ModelMismatchError(msg)

    def path(self, name: str) -> Path:
        """Artifact path inside the output directory"""
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name


RecipeFn = Callable[[RecipeContext], list[Path]]


@dataclasses.dataclass(frozen=True)
class ExperimentRecipe:
    """A named, reproducible experiment"""

    name: str
    description: str
    needs_model: bool
    fn: RecipeFn

    def __call__(self, ctx: RecipeContext) -> list[Path]:
        """Run the recipe and return the written artifacts"""
        logger.info("running recipe %s", self.name)
        paths = self.fn(ctx)
        for p in paths:
            logger.info("  wrote %s", p)
        return paths


RECIPES: dict[str, ExperimentRecipe] = {}


def recipe(name: str, *, needs_model: bool = False) -> Callable[[RecipeFn], RecipeFn]:
    """Register a recipe under ``name``; the docstring's first line describes it"""

    def register(fn: RecipeFn) -> RecipeFn:
        doc = (fn.__doc__ or "").strip().splitlines()
        RECIPES[name] = ExperimentRecipe(name, doc[0] if doc else "", needs_model, fn)
        return fn

    return register


def run_recipe(name: str, ctx: RecipeContext) -> list[Path]:
    """Run a registered recipe

    Raises
    ------
    KeyError
        If no recipe has that name
    """
    if name not in RECIPES:
        msg = f"unknown recipe {name!r}; available: {', '.join(sorted(RECIPES))}"
        raise KeyError(msg)
    return RECIPES[name](ctx)


def _run_one(script: RunScript, model: MlpModel | None) -> TimeSeriesRun:
    return run_closed_loop(script, model)


def run_many(
    scripts: Sequence[RunScript],
    models: Sequence[MlpModel | None],
    workers: int = 1,
) -> list[TimeSeriesRun]:
    """Run scripts, in parallel processes when ``workers > 1``; order is kept"""
    if workers > 1 and len(scripts) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, scripts, models))
    return [_run_one(s, m) for s, m in zip(scripts, models)]


def _controller(
    ctx: RecipeContext, kind: str, variant: FeatureVariant | None = None
) -> tuple[MpcControllerSpec | AnnControllerSpec, MlpModel | None]:
    if kind == "mpc":
        return MpcControllerSpec(config=ctx.controller), None
    model = ctx.model_for(variant)
    spec = AnnControllerSpec(variant=model.variant or variant or ctx.variant)
    return spec, model


def _scenario(
    ctx: RecipeContext, base: ScenarioConfig, duration: float
) -> ScenarioConfig:
    return base.model_copy(update={"duration": ctx.duration or duration})


# Tables


@recipe("table1_switching_states")
def table1_switching_states(ctx: RecipeContext) -> list[Path]:
    """Switching states, their pole-voltage expressions and balanced levels"""
    path = ctx.path("table1_switching_states.csv")
    pd.DataFrame(list(switching_table(NOMINAL_PARAMS.vdc))).to_csv(path, index=False)
    return [path]


@recipe("table2_feature_study", needs_model=True)
def table2_feature_study(ctx: RecipeContext) -> list[Path]:
    """Closed-loop THD of every supplied feature-variant model on S1..S16"""
    if not ctx.models:
        msg = "table2_feature_study needs at least one trained model (--model)"
        raise ModelMismatchError(msg)
    scripts: list[RunScript] = []
    models: list[MlpModel | None] = []
    labels: list[str] = []
    variants = [m.variant or ctx.variant for m in ctx.models]
    for scenario in FEATURE_STUDY_SCENARIOS:
        s = _scenario(ctx, scenario, STEADY_STATE_DURATION)
        mpc = MpcControllerSpec(config=ctx.controller)
        scripts.append(RunScript(controller=mpc, scenario=s))
        models.append(None)
        labels.append("mpc")
        for model, variant in zip(ctx.models, variants):
            spec = AnnControllerSpec(variant=variant)
            scripts.append(RunScript(controller=spec, scenario=s))
            models.append(model)
            labels.append(variant.value)
    table = compare_runs(run_many(scripts, models, ctx.workers))
    table.insert(2, "features", labels)
    path = ctx.path("table2_feature_study.csv")
    table.to_csv(path, index=False)
    return [path]


@recipe("table3_training_corpus")
def table3_training_corpus(ctx: RecipeContext) -> list[Path]:
    """Training conditions: multipliers, controller period and resolved values"""
    rows = []
    for c in TRAINING_CONDITIONS:
        p = c.resolve()
        rows.append(
            {
                "scenario_id": c.scenario_id,
                "vdc_scale": c.scales.vdc,
                "c_scale": c.scales.c,
                "l_scale": c.scales.l,
                "r_scale": c.scales.r,
                "iref_scale": c.scales.iref,
                "ts": p.ts,
                "vdc": p.vdc,
                "c": p.c1,
                "l": p.l,
                "r": p.r,
                "iref_amp": p.iref_amp,
                "records": expected_records(c),
            }
        )
    path = ctx.path("table3_training_corpus.csv")
    pd.DataFrame(rows).to_csv(path, index=False)
    return [path]


@recipe("table4_training_results")
def table4_training_results(ctx: RecipeContext) -> list[Path]:
    """Generate the corpus, split it, train the sweep and evaluate on the test set

    Also writes the test confusion matrix.
    """
    scenarios = [_scenario(ctx, c, c.duration) for c in TRAINING_CONDITIONS]
    frame, manifest = generate_dataset(
        scenarios,
        ctx.variant,
        ctx.controller,
        seed=ctx.seed,
        workers=ctx.workers,
        progress=ctx.progress,
    )
    train_df, val_df, test_df = split_dataset(frame, SplitSpec(seed=ctx.seed))
    cfg = ctx.train_config.model_copy(update={"seed": ctx.seed})
    model, report = train(
        LabeledSet.from_frame(train_df, ctx.variant),
        LabeledSet.from_frame(val_df, ctx.variant),
        cfg,
        test_set=LabeledSet.from_frame(test_df, ctx.variant),
        progress=ctx.progress,
    )

    paths = [
        write_dataset(frame, manifest, ctx.path("dataset.csv")),
        save_model(model, ctx.path(f"model_{ctx.variant.value}.json")),
        dump_yaml(report, ctx.path("train_report.yaml")),
    ]
    sweep = pd.DataFrame([p.model_dump() for p in report.sweep])
    sweep.to_csv(ctx.path("table4_training_results.csv"), index=False)
    paths.append(ctx.path("table4_training_results.csv"))
    if report.test is not None:
        names = [f"V{c}" for c in range(8)]
        cm = pd.DataFrame(report.test.confusion, index=names, columns=names)
        cm.index.name = "true"
        cm.to_csv(ctx.path("fig4_confusion.csv"))
        paths.append(ctx.path("fig4_confusion.csv"))
    return paths


@recipe("table5_parameters")
def table5_parameters(ctx: RecipeContext) -> list[Path]:
    """Nominal inverter and load parameters"""
    units = {
        "vdc": "V",
        "r": "Ohm",
        "l": "H",
        "c1": "F",
        "c2": "F",
        "ts": "s",
        "f0": "Hz",
        "iref_amp": "A",
        "plant_substep": "s",
    }
    rows = [
        {"parameter": k, "value": v, "unit": units[k]}
        for k, v in NOMINAL_PARAMS.model_dump().items()
    ]
    path = ctx.path("table5_parameters.csv")
    pd.DataFrame(rows).to_csv(path, index=False)
    return [path]


# Figures


def _step_response(ctx: RecipeContext, kind: str, name: str) -> list[Path]:
    spec, model = _controller(ctx, kind)
    script = RunScript(
        controller=spec,
        scenario=_scenario(ctx, NOMINAL, STEADY_STATE_DURATION),
        events=(ScheduledEvent(time=STEP_TIME, kind="set_iref_amp", value=STEP_IREF),),
    )
    run = run_closed_loop(script, model)
    t = run.frame["t"].to_numpy()
    rows = []
    for p in PHASES:
        result = settling_time(
            t,
            run.frame[f"i_{p}"],
            run.frame[f"iref_{p}"],
            band=5.0,
            step_time=STEP_TIME,
            smoothing=1 / NOMINAL_PARAMS.f0 / 20,
        )
        rows.append({"phase": p, **result.model_dump()})
    summary = ctx.path(f"{name}_settling.csv")
    pd.DataFrame(rows).to_csv(summary, index=False)
    return [run.write(ctx.path(f"{name}.csv")), summary]


@recipe("fig5_ann_step", needs_model=True)
def fig5_ann_step(ctx: RecipeContext) -> list[Path]:
    """Classifier response to a 10 A to 5 A reference step at 0.05 s"""
    return _step_response(ctx, "ann", "fig5_ann_step")


@recipe("fig6_mpc_step")
def fig6_mpc_step(ctx: RecipeContext) -> list[Path]:
    """Predictive controller response to a 10 A to 5 A reference step at 0.05 s"""
    return _step_response(ctx, "mpc", "fig6_mpc_step")


def _steady_state(ctx: RecipeContext, kind: str) -> TimeSeriesRun:
    spec, model = _controller(ctx, kind)
    script = RunScript(
        controller=spec, scenario=_scenario(ctx, NOMINAL, STEADY_STATE_DURATION)
    )
    return run_closed_loop(script, model)


def _spectrum_figure(ctx: RecipeContext, kind: str, name: str) -> list[Path]:
    run = _steady_state(ctx, kind)
    cycles = run.metadata.script.analysis_cycles
    spec = spectrum(run.frame["i_a"].to_numpy(), run.sample_period, run.f0, cycles)
    harmonics = np.arange(0, 101)
    frame = pd.DataFrame(
        {
            "harmonic": harmonics,
            "frequency": spec.frequencies[harmonics * cycles],
            "magnitude": spec.magnitudes[harmonics * cycles],
            "percent_of_fundamental": spec.normalized()[harmonics * cycles],
        }
    )
    path = ctx.path(f"{name}.csv")
    frame.to_csv(path, index=False)
    report = dump_yaml(run_thd(run, "i_a", cycles), ctx.path(f"{name}_thd.yaml"))
    return [path, report]


@recipe("fig7_ann_spectrum", needs_model=True)
def fig7_ann_spectrum(ctx: RecipeContext) -> list[Path]:
    """Phase-a current spectrum under the classifier at nominal parameters"""
    return _spectrum_figure(ctx, "ann", "fig7_ann_spectrum")


@recipe("fig8_mpc_spectrum")
def fig8_mpc_spectrum(ctx: RecipeContext) -> list[Path]:
    """Phase-a current spectrum under the predictive controller at nominal"""
    return _spectrum_figure(ctx, "mpc", "fig8_mpc_spectrum")


def _waveform_figure(ctx: RecipeContext, kind: str, name: str) -> list[Path]:
    run = _steady_state(ctx, kind)
    n = round(WAVEFORM_CYCLES / (run.f0 * run.sample_period))
    cols = ["t", *(f"i_{p}" for p in PHASES), *(f"vph_{p}" for p in PHASES)]
    path = ctx.path(f"{name}.csv")
    run.frame.loc[:, cols].tail(n).to_csv(path, index=False)
    return [path]


@recipe("fig7_ann_waveform", needs_model=True)
def fig7_ann_waveform(ctx: RecipeContext) -> list[Path]:
    """Steady-state load currents and phase voltages under the classifier"""
    return _waveform_figure(ctx, "ann", "fig7_ann_waveform")


@recipe("fig8_mpc_waveform")
def fig8_mpc_waveform(ctx: RecipeContext) -> list[Path]:
    """Steady-state load currents and phase voltages under the predictive controller"""
    return _waveform_figure(ctx, "mpc", "fig8_mpc_waveform")


def _capacitor_figure(ctx: RecipeContext, kind: str, name: str) -> list[Path]:
    run = _steady_state(ctx, kind)
    cols = ["t"] + [f"v{n}_{p}" for p in PHASES for n in (1, 2)]
    path = ctx.path(f"{name}.csv")
    run.frame.loc[:, cols].to_csv(path, index=False)
    return [path]


@recipe("fig9_ann_capacitors", needs_model=True)
def fig9_ann_capacitors(ctx: RecipeContext) -> list[Path]:
    """Flying-capacitor voltages under the classifier"""
    return _capacitor_figure(ctx, "ann", "fig9_ann_capacitors")


@recipe("fig10_mpc_capacitors")
def fig10_mpc_capacitors(ctx: RecipeContext) -> list[Path]:
    """Flying-capacitor voltages under the predictive controller"""
    return _capacitor_figure(ctx, "mpc", "fig10_mpc_capacitors")


def _mismatch_figure(ctx: RecipeContext, kind: str, name: str) -> list[Path]:
    spec, model = _controller(ctx, kind)
    script = RunScript(
        controller=spec,
        scenario=_scenario(ctx, NOMINAL, MISMATCH_DURATION),
        events=(
            ScheduledEvent(time=MISMATCH_TIME, kind="set_plant_l", value=MISMATCH_L),
        ),
    )
    run = run_closed_loop(script, model)
    cycles = script.analysis_cycles
    pre = run.frame.iloc[: round(MISMATCH_TIME / run.sample_period)]
    rows = []
    for p in PHASES:
        before = run_thd(dataclasses.replace(run, frame=pre), f"i_{p}", cycles).thd
        after = run_thd(run, f"i_{p}", cycles).thd
        post = run.frame.loc[run.frame["t"] > MISMATCH_TIME, f"i_{p}"]
        peak_before = float(np.max(np.abs(pre[f"i_{p}"])))
        peak_after = float(np.max(np.abs(post)))
        rows.append(
            {
                "phase": p,
                "thd_before": before,
                "thd_after": after,
                "peak_before": peak_before,
                "peak_after": peak_after,
            }
        )
    summary = ctx.path(f"{name}_summary.csv")
    pd.DataFrame(rows).to_csv(summary, index=False)
    return [run.write(ctx.path(f"{name}.csv")), summary]


@recipe("fig11_ann_mismatch", needs_model=True)
def fig11_ann_mismatch(ctx: RecipeContext) -> list[Path]:
    """Classifier after the load inductance drops to 5 mH at 0.1 s"""
    return _mismatch_figure(ctx, "ann", "fig11_ann_mismatch")


@recipe("fig12_mpc_mismatch")
def fig12_mpc_mismatch(ctx: RecipeContext) -> list[Path]:
    """Predictive controller after the load inductance drops to 5 mH at 0.1 s"""
    return _mismatch_figure(ctx, "mpc", "fig12_mpc_mismatch")


@recipe("fig13_thd_bars", needs_model=True)
def fig13_thd_bars(ctx: RecipeContext) -> list[Path]:
    """THD of both controllers over the twelve comparison operating points"""
    scripts: list[RunScript] = []
    models: list[MlpModel | None] = []
    for sid in FIG13_SCENARIO_IDS:
        s = _scenario(ctx, BUILTIN_SCENARIOS[sid], STEADY_STATE_DURATION)
        for kind in ("mpc", "ann"):
            spec, model = _controller(ctx, kind)
            scripts.append(RunScript(controller=spec, scenario=s))
            models.append(model)
    table = compare_runs(run_many(scripts, models, ctx.workers))
    path = ctx.path("fig13_thd_bars.csv")
    table.to_csv(path, index=False)
    dumped = [s.model_dump(mode="json") for s in scripts]
    echo = dump_yaml(
        {
            "scenarios": list(FIG13_SCENARIO_IDS),
            "config_hash": config_hash({"scripts": dumped}),
        },
        ctx.path("fig13_thd_bars.meta.yaml"),
    )
    return [path, echo]


def load_models(paths: Sequence[str | Path]) -> tuple[MlpModel, ...]:
    """Load every model file in ``paths``"""
    return tuple(load_model(p) for p in paths)

