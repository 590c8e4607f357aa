"""Predictive and neural-network control of a four-level flying-capacitor inverter

The plant model lives in `plant`, the finite-control-set predictive expert in
`mpc` and the classifier that imitates it in `ann`. `controller` closes the
loop around either, `dataset` turns expert runs into labeled corpora and
`analysis` scores recorded runs. `recipes` bundles the standard experiments,
each writing plot-ready CSV.
"""

from . import analysis, ann, config, controller, dataset, features, mpc, plant
from . import recipes, scenarios, validation
from .errors import (
    DimensionMismatchError,
    FcmliError,
    FeatureVariantError,
    ModelMismatchError,
    SimulationDivergedError,
    ThdWindowError,
    TrainingDivergedError,
)
from .features import FeatureVariant
from .mpc import ControllerConfig, CostWeights, mpc_step
from .plant import PlantState, SwitchingState, SystemParams, step_plant

__all__ = [
    "ControllerConfig",
    "CostWeights",
    "DimensionMismatchError",
    "FcmliError",
    "FeatureVariant",
    "FeatureVariantError",
    "ModelMismatchError",
    "PlantState",
    "SimulationDivergedError",
    "SwitchingState",
    "SystemParams",
    "ThdWindowError",
    "TrainingDivergedError",
    "analysis",
    "ann",
    "config",
    "controller",
    "dataset",
    "features",
    "mpc",
    "mpc_step",
    "plant",
    "recipes",
    "scenarios",
    "step_plant",
    "validation",
]
