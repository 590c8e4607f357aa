"""Finite-control-set model predictive control of one inverter leg

Every controller period the expert predicts, for each of the eight switching
states of a leg, the load current and flying-capacitor voltages one period
ahead, scores the predictions with a weighted quadratic cost and applies the
cheapest state at the next sampling instant.

The legs are enumerated independently. The common-mode voltage seen by a
candidate is formed from the candidate's own pole voltage and the pole
voltages the other two legs applied over the last period.
"""

from __future__ import annotations

import dataclasses
import typing as ty
from collections.abc import Sequence

import numpy as np
import pydantic
from numpy.typing import ArrayLike, NDArray

from .plant import (
    ALL_STATES,
    SWITCH_BITS,
    PlantState,
    SwitchingState,
    SystemParams,
    as_indices,
    phase_output_voltage,
)
from .validation import Farads, Henries, Ohms

_CANDIDATES = np.arange(8)
_DS1 = (SWITCH_BITS[:, 1] - SWITCH_BITS[:, 0]).astype(np.float64)
_DS2 = (SWITCH_BITS[:, 2] - SWITCH_BITS[:, 1]).astype(np.float64)


class PredictorConstants(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Coefficients of the discrete current model ``i' = v*m1 + i*m2``"""

    m1: float = pydantic.Field(gt=0)
    m2: float

    @classmethod
    def from_params(cls, params: SystemParams) -> PredictorConstants:
        """``m1 = ts/L``, ``m2 = 1 - R*ts/L``"""
        return cls(m1=params.ts / params.l, m2=1 - params.r * params.ts / params.l)


class CostWeights(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Weights on the squared current and capacitor-voltage errors"""

    lambda1: float = pydantic.Field(default=1.0, ge=0, allow_inf_nan=False)
    lambda2: float = pydantic.Field(default=1.0, ge=0, allow_inf_nan=False)

    @pydantic.model_validator(mode="after")
    def _not_both_zero(self) -> CostWeights:
        if self.lambda1 == 0 and self.lambda2 == 0:
            msg = "lambda1 and lambda2 cannot both be zero"
            raise ValueError(msg)
        return self

    def scaled(self, k: float) -> CostWeights:
        """Both weights multiplied by ``k > 0``"""
        return CostWeights(lambda1=k * self.lambda1, lambda2=k * self.lambda2)


@dataclasses.dataclass(frozen=True)
class PhaseMeasurement:
    """Sampled current and capacitor voltages of one leg"""

    i: float
    v1: float
    v2: float


@dataclasses.dataclass(frozen=True)
class Prediction:
    """Predicted leg quantities one controller period ahead"""

    i_next: float
    v1_next: float
    v2_next: float


@dataclasses.dataclass(frozen=True)
class References:
    """Tracking targets of one leg at the sampling instant"""

    i_ref: float
    v1_ref: float
    v2_ref: float

    @classmethod
    def balanced(cls, i_ref: float, vdc: float) -> References:
        """Capacitor references at ``vdc/3`` and ``2*vdc/3``"""
        v1_ref = vdc / 3
        return cls(i_ref=i_ref, v1_ref=v1_ref, v2_ref=2 * v1_ref)


PHASE_SHIFTS = np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3])
"""Reference phase angles of legs a, b, c"""


def reference_currents(t: ArrayLike, amplitude: float, f0: float) -> NDArray:
    """Balanced three-phase sinusoidal current references

    Returns shape ``(3,)`` for a scalar ``t`` and ``(n, 3)`` for ``n`` times.
    """
    t = np.asarray(t, dtype=np.float64)
    return amplitude * np.sin(2 * np.pi * f0 * t[..., np.newaxis] + PHASE_SHIFTS)


class ControllerConfig(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Cost weights and the controller's internal plant model

    Unset model parameters default to the plant's values. Setting them
    differently from the plant expresses a model mismatch.
    """

    lambda1: float = pydantic.Field(default=1.0, ge=0, allow_inf_nan=False)
    lambda2: float = pydantic.Field(default=1.0, ge=0, allow_inf_nan=False)
    model_r: Ohms | None = None
    model_l: Henries | None = None
    model_c1: Farads | None = None
    model_c2: Farads | None = None

    @property
    def weights(self) -> CostWeights:
        """The cost weights"""
        return CostWeights(lambda1=self.lambda1, lambda2=self.lambda2)

    def model_params(self, plant: SystemParams) -> SystemParams:
        """The controller's copy of the plant parameters"""
        update = {
            name: value
            for name, value in (
                ("r", self.model_r),
                ("l", self.model_l),
                ("c1", self.model_c1),
                ("c2", self.model_c2),
            )
            if value is not None
        }
        return plant.model_copy(update=update)


def _predict_arrays(
    meas: PhaseMeasurement,
    idx: NDArray,
    v_on: ArrayLike,
    consts: PredictorConstants,
    params: SystemParams,
) -> tuple[NDArray, NDArray, NDArray]:
    vxn = np.asarray(phase_output_voltage(idx, meas.v1, meas.v2, params.vdc))
    i_next = (vxn - v_on) * consts.m1 + meas.i * consts.m2
    v1_next = meas.v1 + (params.ts / params.c1) * meas.i * _DS1[idx]
    v2_next = meas.v2 + (params.ts / params.c2) * meas.i * _DS2[idx]
    return i_next, v1_next, v2_next


def _cost_arrays(
    i_next: ArrayLike,
    v1_next: ArrayLike,
    v2_next: ArrayLike,
    refs: References,
    w: CostWeights,
) -> NDArray:
    ei = np.subtract(refs.i_ref, i_next)
    e1 = np.subtract(refs.v1_ref, v1_next)
    e2 = np.subtract(refs.v2_ref, v2_next)
    return w.lambda1 * (ei * ei) + w.lambda2 * (e1 * e1) + w.lambda2 * (e2 * e2)


def predict(
    meas: PhaseMeasurement,
    candidate: SwitchingState,
    v_on: float,
    consts: PredictorConstants,
    params: SystemParams,
) -> Prediction:
    """One-step prediction of a leg under a candidate switching state

    ``params`` holds the controller's model of the plant, which need not equal
    the plant. ``v1' = v1 + ts/C1*i*(s2-s1)``, ``v2' = v2 + ts/C2*i*(s3-s2)``
    and ``i' = (v_xN - v_on)*m1 + i*m2``.
    """
    i_next, v1_next, v2_next = _predict_arrays(
        meas, np.asarray(candidate.index), v_on, consts, params
    )
    return Prediction(float(i_next), float(v1_next), float(v2_next))


def cost(pred: Prediction, refs: References, w: CostWeights) -> float:
    """``l1*(i*-i')^2 + l2*(v1*-v1')^2 + l2*(v2*-v2')^2``"""
    return float(_cost_arrays(pred.i_next, pred.v1_next, pred.v2_next, refs, w))


def candidate_costs(  # noqa: PLR0913
    meas: PhaseMeasurement,
    refs: References,
    w: CostWeights,
    consts: PredictorConstants,
    params: SystemParams,
    v_on: ArrayLike,
    candidates: ArrayLike | None = None,
) -> NDArray:
    """Cost of each candidate, ordered V0..V7 unless ``candidates`` is given

    ``v_on`` is a scalar or one common-mode voltage per state, indexed V0..V7.
    ``candidates`` lists the state indices to evaluate, in evaluation order.
    """
    idx = _CANDIDATES if candidates is None else as_indices(candidates)
    v = np.asarray(v_on, dtype=np.float64)
    if v.ndim:
        v = v[idx]
    predicted = _predict_arrays(meas, idx, v, consts, params)
    return _cost_arrays(*predicted, refs, w)


def select_optimal(  # noqa: PLR0913
    meas: PhaseMeasurement,
    refs: References,
    w: CostWeights,
    consts: PredictorConstants,
    params: SystemParams,
    v_on: ArrayLike,
    candidates: ArrayLike | None = None,
) -> tuple[SwitchingState, float]:
    """Exhaustive search for the cost-minimizing switching state of one leg

    Ties resolve to the lowest vector index, whatever order ``candidates``
    are evaluated in.

    Returns
    -------
    tuple[SwitchingState, float]
        The optimal state and its cost
    """
    idx = _CANDIDATES if candidates is None else as_indices(candidates)
    costs = candidate_costs(meas, refs, w, consts, params, v_on, idx)
    best = int(np.lexsort((idx, costs))[0])
    return ALL_STATES[int(idx[best])], float(costs[best])


def other_legs_pole_sum(
    meas: PlantState,
    last_applied: Sequence[SwitchingState] | ArrayLike,
    vdc: float,
) -> NDArray:
    """For each leg, the sum of the other two legs' applied pole voltages"""
    applied = np.asarray(
        phase_output_voltage(as_indices(last_applied), meas.v1, meas.v2, vdc)
    )
    return applied.sum() - applied


def common_mode_for_candidates(
    v1: float, v2: float, vdc: float, others: ArrayLike
) -> NDArray:
    """Common mode of each candidate of one leg given the other legs' pole sum"""
    return (np.asarray(phase_output_voltage(_CANDIDATES, v1, v2, vdc)) + others) / 3


def candidate_common_mode(
    meas: PlantState,
    last_applied: Sequence[SwitchingState] | ArrayLike,
    vdc: float,
) -> NDArray:
    """Per-leg, per-candidate common-mode voltages, shape ``(3, 8)``

    Row ``x`` holds the common mode seen when leg ``x`` applies candidate
    ``c`` while the other legs keep their last applied states, all at the
    measured capacitor voltages.
    """
    others = other_legs_pole_sum(meas, last_applied, vdc)
    cand = np.asarray(
        phase_output_voltage(
            _CANDIDATES[np.newaxis, :],
            meas.v1[:, np.newaxis],
            meas.v2[:, np.newaxis],
            vdc,
        )
    )
    return (cand + others[:, np.newaxis]) / 3


class MpcDecision(ty.NamedTuple):
    """States chosen for the three legs and their costs"""

    states: tuple[SwitchingState, SwitchingState, SwitchingState]
    costs: tuple[float, float, float]

    @property
    def indices(self) -> NDArray[np.int64]:
        """Vector indices of the chosen states"""
        return np.array([s.index for s in self.states], dtype=np.int64)


def mpc_decide(
    meas: PlantState,
    refs: Sequence[References],
    w: CostWeights,
    consts: PredictorConstants,
    params: SystemParams,
    last_applied: Sequence[SwitchingState] | ArrayLike,
) -> MpcDecision:
    """`mpc_step` that also reports the optimal cost of each leg"""
    v_on = candidate_common_mode(meas, last_applied, params.vdc)
    chosen = []
    costs = []
    for x in range(3):
        m = PhaseMeasurement(float(meas.i[x]), float(meas.v1[x]), float(meas.v2[x]))
        state, c = select_optimal(m, refs[x], w, consts, params, v_on[x])
        chosen.append(state)
        costs.append(c)
    return MpcDecision(tuple(chosen), tuple(costs))  # type: ignore[arg-type]


def mpc_step(
    meas: PlantState,
    refs: Sequence[References],
    w: CostWeights,
    consts: PredictorConstants,
    params: SystemParams,
    last_applied: Sequence[SwitchingState] | ArrayLike,
) -> tuple[SwitchingState, SwitchingState, SwitchingState]:
    """Optimal switching states of the three legs for the next period

    Parameters
    ----------
    meas : PlantState
        Plant sampled at instant k
    refs : Sequence[References]
        References of legs a, b, c at instant k
    w : CostWeights
        Cost weights
    consts : PredictorConstants
        Predictor coefficients of the controller model
    params : SystemParams
        Controller model of the plant
    last_applied : Sequence[SwitchingState] | ArrayLike
        States the legs applied over the period ending at k

    Returns
    -------
    tuple[SwitchingState, SwitchingState, SwitchingState]
        States to apply from instant k
    """
    return mpc_decide(meas, refs, w, consts, params, last_applied).states
