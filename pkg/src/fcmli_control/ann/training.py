"""Training, gradient checking and evaluation of the imitation classifier"""

from __future__ import annotations

import concurrent.futures
import functools
import logging
import typing as ty

import numpy as np
import pydantic
import scipy.special
from numpy.typing import ArrayLike, NDArray
from tqdm.auto import tqdm

from ..errors import TrainingDivergedError
from ..features import N_STATES, FeatureVariant, expand_features
from ..validation import NDArrayAdapter
from .model import (
    HiddenActivation,
    MlpModel,
    Normalization,
    forward,
    init_model,
    predict_classes,
)
from .scg import OptimizerName, make_optimizer

if ty.TYPE_CHECKING:
    import pandas as pd

logger = logging.getLogger(__name__)

LABEL_COLUMN = "s_opt_next"

FeatureRows = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="float64", ndim=2, finite=True)
]
Labels = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="int64", ndim=1, ge=0, le=N_STATES - 1)
]
Counts = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="int64", shape=(N_STATES,), ge=0)
]
Confusion = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="int64", shape=(N_STATES, N_STATES), ge=0)
]
Rates = ty.Annotated[
    np.ndarray, NDArrayAdapter(dtype="float64", shape=(N_STATES,), ge=0, le=1)
]


class LabeledSet(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Raw feature rows and the expert's state labels"""

    variant: FeatureVariant
    x: FeatureRows
    y: Labels

    @pydantic.model_validator(mode="after")
    def _check_alignment(self) -> LabeledSet:
        if len(self.x) != len(self.y):
            msg = f"{len(self.x)} feature rows but {len(self.y)} labels"
            raise ValueError(msg)
        if self.x.shape[1] != self.variant.size:
            msg = (
                f"{self.variant.value} has {self.variant.size} features, "
                f"got {self.x.shape[1]}"
            )
            raise ValueError(msg)
        return self

    def __len__(self) -> int:
        """Number of records"""
        return len(self.y)

    @classmethod
    def from_frame(
        cls, frame: pd.DataFrame, variant: str | FeatureVariant
    ) -> LabeledSet:
        """Select the variant's feature columns and the label column"""
        variant = FeatureVariant.parse(variant)
        return cls(
            variant=variant,
            x=frame.loc[:, list(variant.columns)].to_numpy(dtype=np.float64),
            y=frame[LABEL_COLUMN].to_numpy(dtype=np.int64),
        )


class TrainConfig(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Hidden-size sweep and optimizer settings"""

    hidden_sizes: tuple[pydantic.PositiveInt, ...] = pydantic.Field(
        default=(8, 16, 24, 32), min_length=1
    )
    max_epochs: pydantic.PositiveInt = 1000
    patience: pydantic.PositiveInt = 50
    seed: int = 0
    optimizer: OptimizerName = "scg"
    hidden_activation: HiddenActivation = "tanh"
    workers: pydantic.PositiveInt = 1


class EvaluationReport(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Classification quality on a labeled set

    ``confusion[t, p]`` counts records of true class ``t`` predicted as ``p``.
    Precision of a never-predicted class and recall of an absent class are 0.
    """

    n: int = pydantic.Field(ge=0)
    accuracy: float = pydantic.Field(ge=0, le=1)
    confusion: Confusion
    precision: Rates
    recall: Rates
    support: Counts

    @classmethod
    def from_predictions(cls, y_true: ArrayLike, y_pred: ArrayLike) -> EvaluationReport:
        """Build the report from true and predicted class indices"""
        cm = confusion_matrix(y_true, y_pred)
        n = int(cm.sum())
        tp = np.diag(cm).astype(np.float64)
        predicted = cm.sum(axis=0)
        support = cm.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            precision = np.where(predicted > 0, tp / predicted, 0.0)
            recall = np.where(support > 0, tp / support, 0.0)
        return cls(
            n=n,
            accuracy=float(tp.sum() / n) if n else 0.0,
            confusion=cm,
            precision=precision,
            recall=recall,
            support=support,
        )


class SweepPoint(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Training outcome for one hidden-layer size"""

    hidden_size: int
    status: ty.Literal["ok", "diverged"]
    best_epoch: int = 0
    epochs_run: int = 0
    train_loss: float | None = None
    val_loss: float | None = None
    val_error: float | None = None
    message: str | None = None


class TrainReport(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Outcome of a training sweep

    ``loss_trace`` holds the training loss after every accepted optimizer
    step of the selected model, starting with the initial loss.
    """

    variant: FeatureVariant
    optimizer: OptimizerName
    seed: int
    best_hidden_size: int
    best_val_loss: float
    best_val_error: float
    best_epoch: int
    sweep: list[SweepPoint]
    loss_trace: list[float]
    counts: dict[str, int]
    test: EvaluationReport | None = None


def confusion_matrix(y_true: ArrayLike, y_pred: ArrayLike) -> NDArray[np.int64]:
    """8x8 counts, rows true class, columns predicted class"""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    flat = np.bincount(t * N_STATES + p, minlength=N_STATES * N_STATES)
    return flat.reshape(N_STATES, N_STATES)


def pack(model: MlpModel) -> NDArray[np.float64]:
    """Weights and biases as one flat vector"""
    return np.concatenate(
        [model.w_input.ravel(), model.b_input, model.w_output.ravel(), model.b_output]
    )


def _unpack(
    theta: NDArray, m: int, j: int
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    a = m * j
    b = a + j
    c = b + j * N_STATES
    return (
        theta[:a].reshape(m, j),
        theta[a:b],
        theta[b:c].reshape(j, N_STATES),
        theta[c:],
    )


def with_params(model: MlpModel, theta: NDArray) -> MlpModel:
    """Copy of ``model`` carrying the flat parameters ``theta``"""
    m, j, _ = model.layer_sizes
    w1, b1, w2, b2 = _unpack(np.array(theta, dtype=np.float64), m, j)
    return model.model_copy(
        update={"w_input": w1, "b_input": b1, "w_output": w2, "b_output": b2}
    )


def loss_and_grad(
    theta: NDArray,
    x: NDArray,
    y: NDArray,
    m: int,
    j: int,
    activation: HiddenActivation = "tanh",
) -> tuple[float, NDArray]:
    """Mean cross-entropy of softmax outputs and its gradient

    ``x`` holds standardized network inputs, ``y`` class indices.
    """
    w1, b1, w2, b2 = _unpack(theta, m, j)
    n = len(y)
    rows = np.arange(n)
    z = x @ w1 + b1
    if activation == "tanh":
        h = np.tanh(z)
        dh_dz = 1 - h * h
    else:
        h = scipy.special.expit(z)
        dh_dz = h * (1 - h)
    log_p = scipy.special.log_softmax(h @ w2 + b2, axis=1)
    loss = -float(log_p[rows, y].sum()) / n

    d_logits = np.exp(log_p)
    d_logits[rows, y] -= 1
    d_logits /= n
    dz = (d_logits @ w2.T) * dh_dz
    grad = np.concatenate(
        [
            (x.T @ dz).ravel(),
            dz.sum(axis=0),
            (h.T @ d_logits).ravel(),
            d_logits.sum(axis=0),
        ]
    )
    return loss, grad


def gradient_deviation(analytic: ArrayLike, numeric: ArrayLike) -> float:
    """``max|g - g_num| / max(|g|_inf, |g_num|_inf, tiny)``"""
    g = np.asarray(analytic, dtype=np.float64)
    gn = np.asarray(numeric, dtype=np.float64)
    tiny = np.finfo(np.float64).tiny
    scale = max(float(np.max(np.abs(g))), float(np.max(np.abs(gn))), tiny)
    return float(np.max(np.abs(g - gn))) / scale


def gradient_check(
    model: MlpModel,
    x: ArrayLike,
    y: ArrayLike,
    *,
    eps: float = 1e-6,
    grad_fn: ty.Callable[..., tuple[float, NDArray]] = loss_and_grad,
) -> float:
    """Worst relative deviation of ``grad_fn`` from central differences

    ``x`` are network inputs (expanded and standardized), ``y`` labels.
    """
    m, j, _ = model.layer_sizes
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    theta = pack(model)
    _, g = grad_fn(theta, x, y, m, j, model.hidden_activation)

    numeric = np.empty_like(theta)
    for k in range(theta.size):
        step = np.zeros_like(theta)
        step[k] = eps
        up, _ = loss_and_grad(theta + step, x, y, m, j, model.hidden_activation)
        down, _ = loss_and_grad(theta - step, x, y, m, j, model.hidden_activation)
        numeric[k] = (up - down) / (2 * eps)
    return gradient_deviation(g, numeric)


def evaluate(model: MlpModel, data: LabeledSet) -> EvaluationReport:
    """Accuracy, confusion matrix and per-class metrics of ``model`` on ``data``

    Raises
    ------
    ModelMismatchError
        If ``data`` uses a different feature variant than the model
    """
    pred = predict_classes(model, data.x, data.variant)
    return EvaluationReport.from_predictions(data.y, pred)


class _PointResult(ty.NamedTuple):
    point: SweepPoint
    model: MlpModel | None
    trace: list[float]


def _train_point(  # noqa: PLR0913
    hidden: int,
    x_train: NDArray,
    y_train: NDArray,
    x_val: NDArray,
    y_val: NDArray,
    normalization: Normalization,
    variant: FeatureVariant,
    cfg: TrainConfig,
    *,
    progress: bool = False,
) -> _PointResult:
    m = x_train.shape[1]
    rng = np.random.default_rng([cfg.seed, hidden])
    model = init_model(
        m,
        hidden,
        rng,
        variant=variant,
        normalization=normalization,
        hidden_activation=cfg.hidden_activation,
    )
    fun = functools.partial(
        loss_and_grad,
        x=x_train,
        y=y_train,
        m=m,
        j=hidden,
        activation=cfg.hidden_activation,
    )
    try:
        opt = make_optimizer(cfg.optimizer, fun, pack(model))
        if not np.isfinite(opt.loss):
            msg = f"initial training loss is {opt.loss}"
            raise TrainingDivergedError(msg)

        def val_loss(theta: NDArray) -> float:
            loss, _ = loss_and_grad(
                theta, x_val, y_val, m, hidden, cfg.hidden_activation
            )
            if not np.isfinite(loss):
                msg = f"validation loss became {loss}"
                raise TrainingDivergedError(msg)
            return loss

        best_theta, best_val, best_epoch = opt.x.copy(), val_loss(opt.x), 0
        trace = [float(opt.loss)]
        best_trace_len = 1
        stale = 0
        epoch = 0
        epochs = tqdm(
            range(1, cfg.max_epochs + 1),
            desc=f"J={hidden}",
            disable=not progress,
            leave=False,
        )
        for epoch in epochs:  # noqa: B007
            result = opt.step()
            improved = False
            if result.accepted:
                trace.append(result.loss)
                v = val_loss(opt.x)
                if v < best_val:
                    best_theta, best_val, best_epoch = opt.x.copy(), v, epoch
                    best_trace_len = len(trace)
                    improved = True
            stale = 0 if improved else stale + 1
            if result.converged or stale >= cfg.patience:
                break
    except TrainingDivergedError as e:
        logger.warning("hidden size %d diverged: %s", hidden, e)
        point = SweepPoint(hidden_size=hidden, status="diverged", message=str(e))
        return _PointResult(point, None, [])

    best = with_params(model, best_theta).model_copy(
        update={"optimizer": cfg.optimizer}
    )
    val_pred = np.argmax(forward(best, x_val), axis=1)
    point = SweepPoint(
        hidden_size=hidden,
        status="ok",
        best_epoch=best_epoch,
        epochs_run=epoch,
        train_loss=trace[best_trace_len - 1],
        val_loss=best_val,
        val_error=float(np.mean(val_pred != y_val)) if len(y_val) else 0.0,
    )
    logger.info(
        "hidden size %d: val loss %.4f, val error %.4f at epoch %d (%d epochs)",
        hidden, best_val, point.val_error, best_epoch, epoch,
    )
    return _PointResult(point, best, trace[:best_trace_len])


def train(
    train_set: LabeledSet,
    val_set: LabeledSet,
    cfg: TrainConfig | None = None,
    *,
    test_set: LabeledSet | None = None,
    progress: bool = False,
) -> tuple[MlpModel, TrainReport]:
    """Sweep the hidden-layer size and keep the best model by validation loss

    Each sweep point minimizes the mean cross-entropy on the full training
    batch and stops early once the validation loss has not improved for
    ``cfg.patience`` epochs; the parameters of the best validation epoch are
    kept. Standardization statistics come from the training split only.

    Raises
    ------
    ValueError
        If a set is empty or the sets disagree on the feature variant
    TrainingDivergedError
        If every sweep point diverged
    """
    cfg = cfg or TrainConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        msg = "training and validation sets must be non-empty"
        raise ValueError(msg)
    variant = train_set.variant
    mixed = val_set.variant is not variant or (
        test_set is not None and test_set.variant is not variant
    )
    if mixed:
        msg = "training, validation and test sets use different feature variants"
        raise ValueError(msg)

    x_train_raw = expand_features(variant, train_set.x)
    normalization = Normalization.fit(x_train_raw)
    x_train = normalization.apply(x_train_raw)
    x_val = normalization.apply(expand_features(variant, val_set.x))
    logger.info(
        "training %s on %d records (%d validation), optimizer %s, sweep %s",
        variant.value, len(train_set), len(val_set), cfg.optimizer, cfg.hidden_sizes,
    )

    point_fn = functools.partial(
        _train_point,
        x_train=x_train,
        y_train=train_set.y,
        x_val=x_val,
        y_val=val_set.y,
        normalization=normalization,
        variant=variant,
        cfg=cfg,
    )
    if cfg.workers > 1 and len(cfg.hidden_sizes) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(point_fn, cfg.hidden_sizes))
    else:
        results = [point_fn(h, progress=progress) for h in cfg.hidden_sizes]

    ok = [r for r in results if r.model is not None]
    if not ok:
        msg = "training diverged for every hidden size"
        raise TrainingDivergedError(msg)
    best = min(ok, key=lambda r: ty.cast("float", r.point.val_loss))
    model = ty.cast("MlpModel", best.model)

    counts = {"train": len(train_set), "val": len(val_set)}
    test = None
    if test_set is not None:
        counts["test"] = len(test_set)
        test = evaluate(model, test_set)
        logger.info("test accuracy %.4f on %d records", test.accuracy, test.n)

    report = TrainReport(
        variant=variant,
        optimizer=cfg.optimizer,
        seed=cfg.seed,
        best_hidden_size=best.point.hidden_size,
        best_val_loss=ty.cast("float", best.point.val_loss),
        best_val_error=ty.cast("float", best.point.val_error),
        best_epoch=best.point.best_epoch,
        sweep=[r.point for r in results],
        loss_trace=best.trace,
        counts=counts,
        test=test,
    )
    return model, report
