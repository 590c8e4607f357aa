"""Command-line entry point: ``fcmli <subcommand> ...``"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import pydantic

from .errors import FcmliError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="seed of all randomness")
    parser.add_argument(
        "--out", type=Path, default=Path("out"), help="artifact directory"
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging verbosity",
    )
    parser.add_argument(
        "--no-progress", action="store_true", help="disable progress bars"
    )


def build_parser() -> argparse.ArgumentParser:
    """The argument parser of all subcommands"""
    parser = argparse.ArgumentParser(
        prog="fcmli",
        description=(
            "Predictive and neural-network control of a three-phase four-level "
            "flying-capacitor inverter"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one closed-loop simulation")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="run-script YAML")
    src.add_argument("--scenario", help="built-in scenario id, e.g. nominal or S2")
    p.add_argument("--controller", choices=["mpc", "ann"], default="mpc")
    p.add_argument("--model", type=Path, help="trained model file for ann runs")
    p.add_argument("--variant", default="X2", help="feature variant of the model")
    p.add_argument("--duration", type=float, help="override the run duration [s]")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("gen-dataset", help="generate the expert-labeled corpus")
    _common(p)
    p.add_argument("--conditions", default="C1..C11", help="scenario selection")
    p.add_argument("--variant", default="X2", help="feature variant X1..X5")
    p.add_argument("--config", type=Path, help="controller config YAML")
    p.add_argument("--duration", type=float, help="per-scenario duration [s]")
    p.add_argument("--transient", type=float, help="discarded start-up time [s]")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("split", help="split a dataset 70/15/15")
    _common(p)
    p.add_argument("--input", type=Path, required=True, help="dataset CSV")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train the classifier sweep")
    _common(p)
    p.add_argument(
        "--data", type=Path, required=True, help="directory with train/val/test CSV"
    )
    p.add_argument("--variant", help="feature variant (default: the dataset's)")
    p.add_argument("--config", type=Path, help="training config YAML")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a labeled dataset")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help="dataset CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run-recipe", help="reproduce a table or figure")
    _common(p)
    p.add_argument("name", help="recipe name, or 'list'")
    p.add_argument(
        "--model", type=Path, action="append", default=[], help="model file(s)"
    )
    p.add_argument("--variant", default="X2")
    p.add_argument("--config", type=Path, help="controller config YAML")
    p.add_argument("--duration", type=float, help="override run durations [s]")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_run_recipe)

    p = sub.add_parser("thd", help="THD of one channel of a recorded run")
    _common(p)
    p.add_argument("--input", type=Path, required=True, help="run CSV")
    p.add_argument("--channel", default="i_a")
    p.add_argument("--cycles", type=int)
    p.add_argument("--max-harmonic", type=int, default=100)
    p.set_defaults(func=_cmd_thd)

    p = sub.add_parser("compare", help="comparison table of recorded runs")
    _common(p)
    p.add_argument("--input", type=Path, nargs="+", required=True, help="run CSVs")
    p.add_argument("--max-harmonic", type=int, default=100)
    p.set_defaults(func=_cmd_compare)
    return parser


def _cmd_simulate(args: argparse.Namespace) -> int:
    from .config import load_config
    from .controller import (
        AnnControllerSpec,
        MpcControllerSpec,
        RunScript,
        run_closed_loop,
    )
    from .scenarios import select_scenarios

    if args.config is not None:
        script = load_config(args.config, RunScript)
    else:
        (scenario,) = select_scenarios(args.scenario)
        if args.controller == "ann":
            controller = AnnControllerSpec(model_path=args.model, variant=args.variant)
        else:
            controller = MpcControllerSpec()
        script = RunScript(controller=controller, scenario=scenario)
    if args.duration is not None:
        scenario = script.scenario.model_copy(update={"duration": args.duration})
        script = script.model_copy(update={"scenario": scenario})

    run = run_closed_loop(script)
    name = f"{script.scenario.scenario_id}_{script.controller.kind}.csv"
    path = run.write(args.out / name)
    print(path)
    if run.metadata.diverged:
        logger.error("run diverged: %s", run.metadata.diagnostic)
        return 1
    return 0


def _cmd_gen_dataset(args: argparse.Namespace) -> int:
    from .config import load_config
    from .dataset import generate_dataset, write_dataset
    from .mpc import ControllerConfig
    from .scenarios import select_scenarios

    scenarios = select_scenarios(
        args.conditions, duration=args.duration, transient=args.transient
    )
    config = load_config(args.config, ControllerConfig) if args.config else None
    frame, manifest = generate_dataset(
        scenarios,
        args.variant,
        config,
        seed=args.seed,
        workers=args.workers,
        progress=not args.no_progress,
    )
    print(write_dataset(frame, manifest, args.out / "dataset.csv"))
    return 1 if manifest.failures else 0


def _cmd_split(args: argparse.Namespace) -> int:
    from .dataset import SplitSpec, read_dataset, split_dataset, write_dataset

    frame, manifest = read_dataset(args.input)
    parts = split_dataset(frame, SplitSpec(seed=args.seed))
    for name, part in zip(("train", "val", "test"), parts):
        print(write_dataset(part, manifest, args.out / f"{name}.csv"))
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    from .ann.model import save_model
    from .ann.training import LabeledSet, TrainConfig, train
    from .config import dump_yaml, load_config
    from .dataset import read_dataset

    cfg = load_config(args.config, TrainConfig) if args.config else TrainConfig()
    cfg = TrainConfig.model_validate(
        {**cfg.model_dump(), "seed": args.seed, "workers": args.workers}
    )
    sets = {}
    variant = args.variant
    for name in ("train", "val", "test"):
        path = args.data / f"{name}.csv"
        if not path.exists() and name == "test":
            continue
        frame, manifest = read_dataset(path)
        variant = variant or manifest.variant
        sets[name] = LabeledSet.from_frame(frame, variant)

    model, report = train(
        sets["train"],
        sets["val"],
        cfg,
        test_set=sets.get("test"),
        progress=not args.no_progress,
    )
    variant_name = model.variant.value if model.variant else "model"
    print(save_model(model, args.out / f"model_{variant_name}.json"))
    print(dump_yaml(report, args.out / "train_report.yaml"))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    from .ann.model import load_model
    from .ann.training import LabeledSet, evaluate
    from .dataset import read_dataset

    model = load_model(args.model)
    frame, manifest = read_dataset(args.input)
    data = LabeledSet.from_frame(frame, model.variant or manifest.variant)
    print(evaluate(model, data).model_dump_json(indent=2))
    return 0


def _cmd_run_recipe(args: argparse.Namespace) -> int:
    from .config import load_config
    from .features import FeatureVariant
    from .mpc import ControllerConfig
    from .recipes import RECIPES, RecipeContext, load_models, run_recipe

    if args.name == "list":
        for name, r in RECIPES.items():
            print(f"{name:28s} {'[model] ' if r.needs_model else ''}{r.description}")
        return 0
    ctx = RecipeContext(
        out=args.out,
        models=load_models(args.model),
        variant=FeatureVariant.parse(args.variant),
        controller=load_config(args.config, ControllerConfig)
        if args.config
        else ControllerConfig(),
        seed=args.seed,
        workers=args.workers,
        duration=args.duration,
        progress=not args.no_progress,
    )
    for path in run_recipe(args.name, ctx):
        print(path)
    return 0


def _cmd_thd(args: argparse.Namespace) -> int:
    from .analysis import run_thd
    from .controller import read_run

    run = read_run(args.input)
    cycles = args.cycles or run.metadata.script.analysis_cycles
    report = run_thd(run, args.channel, cycles, args.max_harmonic)
    print(report.model_dump_json(indent=2))
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    from .analysis import compare_runs
    from .controller import read_run

    runs = [read_run(p) for p in args.input]
    table = compare_runs(runs, max_harmonic=args.max_harmonic)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "comparison.csv"
    table.to_csv(path, index=False)
    print(path)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return the exit status

    Domain, validation and I/O errors are logged and give status 1; usage
    errors exit with status 2.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    try:
        return args.func(args)
    except (FcmliError, pydantic.ValidationError, OSError, KeyError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)  # noqa: TRY400
        return 1
