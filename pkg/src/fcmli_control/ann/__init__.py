"""Feed-forward classifier that imitates the predictive controller"""

from ..features import expand_features
from .model import (
    MlpModel,
    Normalization,
    forward,
    init_model,
    load_model,
    network_inputs,
    predict_classes,
    predict_proba,
    save_model,
)
from .scg import MomentumDescent, ScaledConjugateGradient, StepResult, make_optimizer
from .training import (
    EvaluationReport,
    LabeledSet,
    SweepPoint,
    TrainConfig,
    TrainReport,
    confusion_matrix,
    evaluate,
    gradient_check,
    gradient_deviation,
    loss_and_grad,
    pack,
    train,
    with_params,
)

__all__ = [
    "EvaluationReport",
    "LabeledSet",
    "MlpModel",
    "MomentumDescent",
    "Normalization",
    "ScaledConjugateGradient",
    "StepResult",
    "SweepPoint",
    "TrainConfig",
    "TrainReport",
    "confusion_matrix",
    "evaluate",
    "expand_features",
    "forward",
    "gradient_check",
    "gradient_deviation",
    "init_model",
    "load_model",
    "loss_and_grad",
    "make_optimizer",
    "network_inputs",
    "pack",
    "predict_classes",
    "predict_proba",
    "save_model",
    "train",
    "with_params",
]
