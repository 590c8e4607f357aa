"""Continuous-plant emulator of the three-phase four-level flying-capacitor inverter

Each phase leg has three complementary cell pairs driven by the bits
``(s1, s2, s3)`` and two flying capacitors regulated at ``vdc/3`` and
``2*vdc/3``. The legs feed a star-connected RL load, so the load sees the pole
voltages minus their common mode.
"""

from __future__ import annotations

import functools
import logging
import math
import typing as ty
from collections.abc import Sequence

import numpy as np
import pydantic
from numpy.typing import ArrayLike, NDArray

from .errors import SimulationDivergedError
from .validation import (
    Amperes,
    Farads,
    Henries,
    Hertz,
    NonNegativeSeconds,
    Ohms,
    PhaseVector,
    Seconds,
    Volts,
)

if ty.TYPE_CHECKING:
    import pandas as pd

logger = logging.getLogger(__name__)

PHASES = ("a", "b", "c")

Bit = ty.Literal[0, 1]


class SwitchingState(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Commands of the three cell switches of one phase leg

    The complementary switches are implicit. ``index = s1 + 2*s2 + 4*s3``
    reproduces the V0..V7 numbering of the switching-state table.
    """

    s1: Bit
    s2: Bit
    s3: Bit

    @property
    def index(self) -> int:
        """Voltage-vector index 0..7"""
        return self.s1 + 2 * self.s2 + 4 * self.s3

    @property
    def vector_name(self) -> str:
        """``"V0"`` .. ``"V7"``"""
        return f"V{self.index}"

    @classmethod
    def from_index(cls, index: int) -> SwitchingState:
        """The state with the given voltage-vector index"""
        if not 0 <= index < 8:  # noqa: PLR2004
            msg = f"switching-state index must be in 0..7, got {index}"
            raise ValueError(msg)
        return ALL_STATES[index]


ALL_STATES: tuple[SwitchingState, ...] = tuple(
    SwitchingState(s1=i & 1, s2=(i >> 1) & 1, s3=(i >> 2) & 1)  # type: ignore[arg-type]
    for i in range(8)
)
"""The eight per-phase switching states, ordered V0..V7"""

SWITCH_BITS: NDArray[np.int64] = np.array(
    [(s.s1, s.s2, s.s3) for s in ALL_STATES], dtype=np.int64
)
SWITCH_BITS.flags.writeable = False


class SystemParams(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Electrical and timing parameters of the inverter and its RL load

    Any quantity may be given as an SI number or a unit string
    (``l="10 mH"``).
    """

    vdc: Volts = 360.0
    r: Ohms = 15.0
    l: Henries = 10e-3  # noqa: E741
    c1: Farads = 680e-6
    c2: Farads = 680e-6
    ts: Seconds = 30e-6
    f0: Hertz = 50.0
    iref_amp: Amperes = 10.0
    plant_substep: Seconds = 1e-6

    @pydantic.model_validator(mode="after")
    def _check_substep(self) -> SystemParams:
        if self.plant_substep > self.ts:
            msg = f"plant_substep ({self.plant_substep}) exceeds ts ({self.ts})"
            raise ValueError(msg)
        n = round(self.ts / self.plant_substep)
        if not math.isclose(n * self.plant_substep, self.ts, rel_tol=1e-9):
            msg = (
                f"ts ({self.ts}) must be an integer multiple of "
                f"plant_substep ({self.plant_substep})"
            )
            raise ValueError(msg)
        return self

    @property
    def substeps_per_period(self) -> int:
        """Plant sub-steps in one controller period"""
        return round(self.ts / self.plant_substep)

    @property
    def v1_ref(self) -> float:
        """Reference of the inner flying capacitor"""
        return self.vdc / 3

    @property
    def v2_ref(self) -> float:
        """Reference of the outer flying capacitor"""
        return 2 * self.vdc / 3


class PlantState(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Phase currents and capacitor voltages of all three legs

    ``tick`` counts elapsed plant sub-steps; ``t`` is derived from it so the
    clock does not accumulate rounding error.
    """

    i: PhaseVector
    v1: PhaseVector
    v2: PhaseVector
    tick: int = pydantic.Field(default=0, ge=0)
    t: NonNegativeSeconds = 0.0

    def snapshot(self) -> dict[str, float]:
        """Flat per-phase mapping, used for diagnostics"""
        out: dict[str, float] = {"t": self.t}
        for k, ph in enumerate(PHASES):
            out[f"i_{ph}"] = float(self.i[k])
            out[f"v1_{ph}"] = float(self.v1[k])
            out[f"v2_{ph}"] = float(self.v2[k])
        return out


def _bits(state: SwitchingState | ArrayLike) -> tuple[NDArray, NDArray, NDArray]:
    """(s1, s2, s3) for a state or an array of state indices"""
    if isinstance(state, SwitchingState):
        return (np.asarray(state.s1), np.asarray(state.s2), np.asarray(state.s3))
    bits = SWITCH_BITS[np.asarray(state, dtype=np.int64)]
    return bits[..., 0], bits[..., 1], bits[..., 2]


def as_indices(switches: Sequence[SwitchingState] | ArrayLike) -> NDArray[np.int64]:
    """Voltage-vector indices of a sequence of states (or pass indices through)"""
    if isinstance(switches, Sequence) and all(
        isinstance(s, SwitchingState) for s in switches
    ):
        indices = [s.index for s in switches]  # type: ignore[union-attr]
        return np.array(indices, dtype=np.int64)
    return np.asarray(switches, dtype=np.int64)


def phase_output_voltage(
    state: SwitchingState | ArrayLike,
    v1: ArrayLike,
    v2: ArrayLike,
    vdc: ArrayLike,
) -> NDArray | float:
    """Pole voltage V_xN of a leg, referred to the dc-link midpoint

    Evaluates the switching-state table row of ``state``, e.g.
    ``(0,0,0) -> -vdc/2``, ``(1,0,0) -> v1 - vdc/2``,
    ``(0,1,0) -> v2 - v1 - vdc/2``, ``(1,1,1) -> vdc/2``. Every row is the
    sum of the voltages of the cells whose upper switch conducts.

    Parameters
    ----------
    state : SwitchingState | ArrayLike
        A state, or an array of indices 0..7 (broadcast against the voltages)
    v1, v2 : ArrayLike
        Inner and outer flying-capacitor voltages [V]
    vdc : ArrayLike
        dc-link voltage [V]

    Returns
    -------
    float | ndarray
        Pole voltage [V]
    """
    s1, s2, s3 = _bits(state)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    vdc = np.asarray(vdc, dtype=np.float64)
    out = -vdc / 2 + s1 * v1 + s2 * (v2 - v1) + s3 * (vdc - v2)
    return out.item() if out.ndim == 0 else out


def common_mode_voltage(
    van: ArrayLike, vbn: ArrayLike, vcn: ArrayLike
) -> NDArray | float:
    """Common-mode voltage V_ON: mean of the three pole voltages"""
    out = (np.asarray(van) + np.asarray(vbn) + np.asarray(vcn)) / 3
    return out.item() if np.ndim(out) == 0 else out


def phase_voltages(
    switches: Sequence[SwitchingState] | ArrayLike,
    v1: ArrayLike,
    v2: ArrayLike,
    vdc: float,
) -> NDArray:
    """Load phase-to-neutral voltages V_xN - V_ON of the three legs"""
    vxn = np.asarray(phase_output_voltage(as_indices(switches), v1, v2, vdc))
    return vxn - common_mode_voltage(*vxn)


def init_plant(params: SystemParams) -> PlantState:
    """Rest state with balanced pre-charged flying capacitors"""
    return PlantState(
        i=np.zeros(3),
        v1=np.full(3, params.vdc / 3),
        v2=np.full(3, 2 * params.vdc / 3),
    )


PLANT_COLUMNS: tuple[str, ...] = (
    "t",
    "i_a",
    "i_b",
    "i_c",
    "v1_a",
    "v2_a",
    "v1_b",
    "v2_b",
    "v1_c",
    "v2_c",
    "vph_a",
    "vph_b",
    "vph_c",
    "state_a",
    "state_b",
    "state_c",
)
"""Column order of the recorded time series"""

_CAP_COLUMNS = np.array([4, 6, 8]), np.array([5, 7, 9])


class PlantRecorder:
    """Recording channel with one row per plant sub-step

    Parameters
    ----------
    capacity : int
        Number of rows to preallocate; the buffer grows if exceeded
    """

    def __init__(self, capacity: int = 0) -> None:
        self._data = np.empty((max(capacity, 1), len(PLANT_COLUMNS)))
        self._n = 0

    def __len__(self) -> int:
        """Number of recorded rows"""
        return self._n

    def append(  # noqa: PLR0913
        self,
        t: float,
        i: NDArray,
        v1: NDArray,
        v2: NDArray,
        vph: NDArray,
        states: NDArray,
    ) -> None:
        """Record one sample"""
        if self._n == len(self._data):
            grown = (2 * len(self._data), len(PLANT_COLUMNS))
            self._data = np.resize(self._data, grown)
        row = self._data[self._n]
        row[0] = t
        row[1:4] = i
        row[_CAP_COLUMNS[0]] = v1
        row[_CAP_COLUMNS[1]] = v2
        row[10:13] = vph
        row[13:16] = states
        self._n += 1

    @property
    def data(self) -> NDArray:
        """View of the recorded rows, columns as `PLANT_COLUMNS`"""
        return self._data[: self._n]

    def to_frame(self) -> pd.DataFrame:
        """The recording as a DataFrame with integer state columns"""
        import pandas as pd

        frame = pd.DataFrame(self.data.copy(), columns=list(PLANT_COLUMNS))
        for ph in PHASES:
            frame[f"state_{ph}"] = frame[f"state_{ph}"].astype(np.int64)
        return frame


def step_plant(
    state: PlantState,
    switches: Sequence[SwitchingState] | ArrayLike,
    params: SystemParams,
    recorder: PlantRecorder | None = None,
    substeps: int | None = None,
) -> PlantState:
    """Advance the plant over one controller period with switches held

    Forward-Euler at ``params.plant_substep``:

    - ``di/dt = (v_xN - v_ON - R*i) / L``
    - ``dv1/dt = i*(s2 - s1) / C1``
    - ``dv2/dt = i*(s3 - s2) / C2``

    Parameters
    ----------
    state : PlantState
        State at the start of the period
    switches : Sequence[SwitchingState] | ArrayLike
        One state (or state index) per phase
    params : SystemParams
        Plant parameters
    recorder : PlantRecorder | None
        If given, every sub-step sample is appended to it
    substeps : int | None
        Number of sub-steps to advance; one controller period by default

    Returns
    -------
    PlantState
        State at the end of the advanced interval

    Raises
    ------
    SimulationDivergedError
        If the state becomes non-finite
    """
    idx = as_indices(switches)
    s1, s2, s3 = (b.astype(np.float64) for b in _bits(idx))
    n = params.substeps_per_period if substeps is None else substeps
    h = params.plant_substep
    vdc, r, l = params.vdc, params.r, params.l
    k1 = (s2 - s1) * (h / params.c1)
    k2 = (s3 - s2) * (h / params.c2)

    i, v1, v2 = state.i.copy(), state.v1.copy(), state.v2.copy()
    for j in range(1, n + 1):
        vxn = -vdc / 2 + s1 * v1 + s2 * (v2 - v1) + s3 * (vdc - v2)
        vph = vxn - vxn.mean()
        v1 = v1 + k1 * i
        v2 = v2 + k2 * i
        i = i + (h / l) * (vph - r * i)
        # non-finite samples are never recorded
        if not np.isfinite(i.sum() + v1.sum() + v2.sum()):
            t = (state.tick + j) * h
            snapshot = {"i": i.tolist(), "v1": v1.tolist(), "v2": v2.tolist()}
            logger.error("plant diverged at t=%.6g s: %s", t, snapshot)
            raise SimulationDivergedError(t, snapshot)
        if recorder is not None:
            recorder.append((state.tick + j) * h, i, v1, v2, vph, idx)

    tick = state.tick + n
    return PlantState.model_construct(i=i, v1=v1, v2=v2, tick=tick, t=tick * h)


@functools.cache
def switching_table(vdc: float = 360.0) -> tuple[dict[str, ty.Any], ...]:
    """Rows of the switching-state table at balanced capacitor voltages

    Each row has the vector name, its bits, the symbolic pole-voltage
    expression and its value with ``v1 = vdc/3``, ``v2 = 2*vdc/3``.
    """
    expressions = (
        "-Vdc/2",
        "V1x-Vdc/2",
        "V2x-V1x-Vdc/2",
        "V2x-Vdc/2",
        "Vdc/2-V2x",
        "Vdc/2-V2x+V1x",
        "Vdc/2-V1x",
        "Vdc/2",
    )
    return tuple(
        {
            "vector": s.vector_name,
            "s1": s.s1,
            "s2": s.s2,
            "s3": s.s3,
            "expression": expr,
            "v_xn": phase_output_voltage(s, vdc / 3, 2 * vdc / 3, vdc),
        }
        for s, expr in zip(ALL_STATES, expressions, strict=True)
    )
