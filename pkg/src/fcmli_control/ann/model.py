"""One-hidden-layer perceptron classifier over the eight switching states"""

from __future__ import annotations

import logging
import typing as ty
from pathlib import Path

import numpy as np
import pydantic
import scipy.special
from numpy.typing import ArrayLike, NDArray

from ..errors import DimensionMismatchError, ModelMismatchError
from ..features import N_STATES, FeatureVariant, expand_features
from ..validation import NDArrayAdapter

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

Matrix = ty.Annotated[np.ndarray, NDArrayAdapter(dtype="float64", ndim=2, finite=True)]
Vector = ty.Annotated[np.ndarray, NDArrayAdapter(dtype="float64", ndim=1, finite=True)]
PositiveVector = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="float64", ndim=1, finite=True, ge=1e-300)
]

HiddenActivation = ty.Literal["tanh", "logistic"]


class Normalization(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Per-component standardization ``(x - mean) / scale``"""

    mean: Vector
    scale: PositiveVector

    @pydantic.model_validator(mode="after")
    def _check_lengths(self) -> Normalization:
        if self.mean.shape != self.scale.shape:
            msg = (
                f"mean {self.mean.shape} and scale {self.scale.shape} "
                "differ in length"
            )
            raise ValueError(msg)
        return self

    @classmethod
    def fit(cls, x: ArrayLike) -> Normalization:
        """Statistics of ``x`` (rows are samples); constant columns get scale 1"""
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0)
        return cls(mean=x.mean(axis=0), scale=np.where(std > 0, std, 1.0))

    @classmethod
    def identity(cls, size: int) -> Normalization:
        """No-op statistics"""
        return cls(mean=np.zeros(size), scale=np.ones(size))

    def apply(self, x: ArrayLike) -> NDArray[np.float64]:
        """Standardize ``x``"""
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale


class MlpModel(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Feed-forward network ``M -> J -> 8``

    ``H = h(x @ w_input + b_input)`` and
    ``y = softmax(H @ w_output + b_output)``. ``normalization`` is applied to
    the one-hot expanded features before the input layer.
    """

    format_version: ty.Literal[1] = FORMAT_VERSION
    variant: FeatureVariant | None = None
    hidden_activation: HiddenActivation = "tanh"
    output_activation: ty.Literal["softmax"] = "softmax"
    w_input: Matrix
    b_input: Vector
    w_output: Matrix
    b_output: Vector
    normalization: Normalization
    optimizer: str | None = None

    @pydantic.model_validator(mode="after")
    def _check_dimensions(self) -> MlpModel:
        m, j = self.w_input.shape
        problems = []
        if self.b_input.shape != (j,):
            problems.append(f"b_input {self.b_input.shape} != ({j},)")
        if self.w_output.shape != (j, N_STATES):
            problems.append(f"w_output {self.w_output.shape} != ({j}, {N_STATES})")
        if self.b_output.shape != (N_STATES,):
            problems.append(f"b_output {self.b_output.shape} != ({N_STATES},)")
        if self.normalization.mean.shape != (m,):
            n_norm = len(self.normalization.mean)
            problems.append(f"normalization length {n_norm} != {m}")
        if self.variant is not None and self.variant.input_size != m:
            problems.append(
                f"{self.variant.value} needs {self.variant.input_size} inputs, "
                f"not {m}"
            )
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        """``(M, J, N)``"""
        m, j = self.w_input.shape
        return m, j, N_STATES

    @property
    def n_params(self) -> int:
        """Number of trainable weights and biases"""
        return sum(
            a.size for a in (self.w_input, self.b_input, self.w_output, self.b_output)
        )


def init_model(
    input_size: int,
    hidden_size: int,
    rng: np.random.Generator,
    *,
    variant: FeatureVariant | None = None,
    normalization: Normalization | None = None,
    hidden_activation: HiddenActivation = "tanh",
) -> MlpModel:
    """Random model, weights uniform in ``+-1/sqrt(fan_in)``, zero biases"""
    a1 = 1 / np.sqrt(input_size)
    a2 = 1 / np.sqrt(hidden_size)
    return MlpModel(
        variant=variant,
        hidden_activation=hidden_activation,
        w_input=rng.uniform(-a1, a1, (input_size, hidden_size)),
        b_input=np.zeros(hidden_size),
        w_output=rng.uniform(-a2, a2, (hidden_size, N_STATES)),
        b_output=np.zeros(N_STATES),
        normalization=normalization or Normalization.identity(input_size),
    )


def hidden_layer(model: MlpModel, x: NDArray) -> NDArray:
    """Hidden activations for network inputs ``x``"""
    z = x @ model.w_input + model.b_input
    if model.hidden_activation == "tanh":
        return np.tanh(z)
    return scipy.special.expit(z)


def forward(model: MlpModel, x: ArrayLike) -> NDArray[np.float64]:
    """Class probabilities for network inputs

    ``x`` is already one-hot expanded and standardized, with shape ``(M,)`` or
    ``(n, M)``.

    Raises
    ------
    DimensionMismatchError
        If the trailing dimension of ``x`` is not ``M``
    """
    x = np.asarray(x, dtype=np.float64)
    m = model.w_input.shape[0]
    if x.ndim == 0 or x.shape[-1] != m:
        msg = f"model expects {m} inputs, got shape {x.shape}"
        raise DimensionMismatchError(msg)
    logits = hidden_layer(model, x) @ model.w_output + model.b_output
    return scipy.special.softmax(logits, axis=-1)


def network_inputs(
    model: MlpModel, features: ArrayLike, variant: str | FeatureVariant | None = None
) -> NDArray[np.float64]:
    """Raw feature rows to standardized network inputs

    Raises
    ------
    ModelMismatchError
        If ``variant`` differs from the variant the model was trained on
    """
    variant = _resolve_variant(model, variant)
    return model.normalization.apply(expand_features(variant, features))


def _resolve_variant(
    model: MlpModel, variant: str | FeatureVariant | None
) -> FeatureVariant:
    if variant is not None:
        variant = FeatureVariant.parse(variant)
    if (
        model.variant is not None
        and variant is not None
        and variant is not model.variant
    ):
        msg = (
            f"model was trained on {model.variant.value} features, "
            f"got {variant.value}"
        )
        raise ModelMismatchError(msg)
    resolved = model.variant or variant
    if resolved is None:
        msg = "the model records no feature variant and none was given"
        raise ModelMismatchError(msg)
    return resolved


def predict_proba(
    model: MlpModel, features: ArrayLike, variant: str | FeatureVariant | None = None
) -> NDArray[np.float64]:
    """Class probabilities for raw feature rows"""
    return forward(model, network_inputs(model, features, variant))


def predict_classes(
    model: MlpModel, features: ArrayLike, variant: str | FeatureVariant | None = None
) -> NDArray[np.int64]:
    """Most probable state index per row; ties go to the lowest index"""
    return np.argmax(predict_proba(model, features, variant), axis=-1)


def save_model(model: MlpModel, path: str | Path) -> Path:
    """Write the model as JSON text; floats round-trip exactly"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2), encoding="utf-8")
    logger.info(
        "wrote model %s (layers %s) to %s", model.variant, model.layer_sizes, path
    )
    return path


def load_model(path: str | Path) -> MlpModel:
    """Read a model written by `save_model`"""
    return MlpModel.model_validate_json(Path(path).read_text(encoding="utf-8"))
