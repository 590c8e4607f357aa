"""Built-in operating conditions

Training-corpus conditions, feature-study operating points and the nominal
setup.
"""

from __future__ import annotations

import logging
import re

import pydantic

from .plant import SystemParams
from .validation import NonNegativeSeconds, Seconds

logger = logging.getLogger(__name__)


class ParameterScales(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Multipliers applied to a base parameter set"""

    vdc: float = pydantic.Field(default=1.0, gt=0, allow_inf_nan=False)
    c: float = pydantic.Field(default=1.0, gt=0, allow_inf_nan=False)
    l: float = pydantic.Field(default=1.0, gt=0, allow_inf_nan=False)  # noqa: E741
    r: float = pydantic.Field(default=1.0, gt=0, allow_inf_nan=False)
    iref: float = pydantic.Field(default=1.0, gt=0, allow_inf_nan=False)


class ScenarioConfig(pydantic.BaseModel, frozen=True, extra="forbid"):
    """A named operating condition

    The effective parameters are ``base`` scaled by ``scales``, with the
    controller period replaced by ``ts`` when given. Both capacitors share the
    ``c`` multiplier.
    """

    scenario_id: str = pydantic.Field(min_length=1)
    base: SystemParams = SystemParams()
    scales: ParameterScales = ParameterScales()
    ts: Seconds | None = None
    duration: NonNegativeSeconds = 0.3
    transient: NonNegativeSeconds = 0.02
    seed: int = 0

    def resolve(self) -> SystemParams:
        """The effective plant parameters of this scenario"""
        b, k = self.base, self.scales
        return SystemParams(
            vdc=b.vdc * k.vdc,
            r=b.r * k.r,
            l=b.l * k.l,
            c1=b.c1 * k.c,
            c2=b.c2 * k.c,
            ts=b.ts if self.ts is None else self.ts,
            f0=b.f0,
            iref_amp=b.iref_amp * k.iref,
            plant_substep=b.plant_substep,
        )


NOMINAL_PARAMS = SystemParams(
    vdc=360.0,
    r=15.0,
    l=10e-3,
    c1=680e-6,
    c2=680e-6,
    ts=30e-6,
    f0=50.0,
    iref_amp=10.0,
)
"""Nominal inverter and load parameters"""

NOMINAL = ScenarioConfig(scenario_id="nominal", base=NOMINAL_PARAMS)

TRAINING_BASE = SystemParams(**{**NOMINAL_PARAMS.model_dump(), "iref_amp": 15.0})
"""Base of the training conditions; the reference amplitude is 15 A"""


def _condition(
    cid: str,
    vdc: float,
    c: float,
    l: float,  # noqa: E741
    r: float,
    iref: float,
    ts: float,
) -> ScenarioConfig:
    return ScenarioConfig(
        scenario_id=cid,
        base=TRAINING_BASE,
        scales=ParameterScales(vdc=vdc, c=c, l=l, r=r, iref=iref),
        ts=ts,
    )


TRAINING_CONDITIONS: tuple[ScenarioConfig, ...] = (
    #          id     vdc   c     l     r     iref  ts
    _condition("C1", 0.95, 0.95, 1.00, 0.80, 0.95, 30e-6),
    _condition("C2", 0.90, 0.85, 0.95, 0.70, 0.90, 10e-6),
    _condition("C3", 1.25, 0.90, 1.20, 1.10, 1.15, 50e-6),
    _condition("C4", 1.10, 1.05, 1.50, 1.23, 1.05, 60e-6),
    _condition("C5", 1.00, 1.10, 1.05, 1.40, 0.75, 15e-6),
    _condition("C6", 1.00, 0.98, 0.75, 1.30, 0.65, 18e-6),
    _condition("C7", 1.15, 1.20, 0.80, 1.17, 0.55, 50e-6),
    _condition("C8", 1.00, 1.07, 0.88, 0.77, 0.85, 30e-6),
    _condition("C9", 1.00, 1.00, 0.98, 0.87, 0.50, 40e-6),
    _condition("C10", 1.00, 1.00, 0.90, 0.10, 2.00, 5e-6),
    _condition("C11", 1.00, 1.00, 0.90, 0.10, 2.00, 15e-6),
)
"""Perturbed conditions the expert is run under to build the training corpus"""


def _operating_point(
    sid: str,
    vdc: float,
    ts: float,
    r: float,
    l: float,  # noqa: E741
    iref: float,
) -> ScenarioConfig:
    params = SystemParams(
        **{
            **NOMINAL_PARAMS.model_dump(),
            "vdc": vdc,
            "ts": ts,
            "r": r,
            "l": l,
            "iref_amp": iref,
        }
    )
    return ScenarioConfig(scenario_id=sid, base=params)


FEATURE_STUDY_SCENARIOS: tuple[ScenarioConfig, ...] = (
    #                id     vdc    ts     r     l        iref
    _operating_point("S1", 360.0, 30e-6, 10.0, 5e-3, 17.0),
    _operating_point("S2", 360.0, 30e-6, 15.0, 10e-3, 12.0),
    _operating_point("S3", 360.0, 30e-6, 25.0, 12e-3, 5.0),
    _operating_point("S4", 342.0, 20e-6, 7.5, 8e-3, 12.0),
    _operating_point("S5", 378.0, 20e-6, 15.0, 4.5e-3, 10.0),
    _operating_point("S6", 360.0, 45e-6, 15.0, 9e-3, 4.0),
    _operating_point("S7", 360.0, 45e-6, 8.0, 10e-3, 5.0),
    _operating_point("S8", 350.0, 50e-6, 9.0, 9.5e-3, 6.0),
    _operating_point("S9", 340.0, 50e-6, 11.0, 5e-3, 6.0),
    _operating_point("S10", 360.0, 50e-6, 10.0, 5.5e-3, 4.35),
    _operating_point("S11", 360.0, 20e-6, 10.0, 5e-3, 12.0),
    _operating_point("S12", 340.0, 25e-6, 10.0, 5e-3, 10.0),
    _operating_point("S13", 350.0, 20e-6, 12.0, 7e-3, 8.0),
    _operating_point("S14", 360.0, 20e-6, 7.0, 5e-3, 15.0),
    _operating_point("S15", 350.0, 25e-6, 9.0, 5e-3, 12.0),
    _operating_point("S16", 350.0, 40e-6, 9.0, 5e-3, 12.0),
)
"""Operating points of the input-feature study, capacitors at 680 uF"""

FIG13_SCENARIO_IDS: tuple[str, ...] = (
    "S1",
    "S2",
    "S4",
    "S5",
    "S6",
    "S7",
    "S9",
    "S11",
    "S13",
    "S14",
    "S15",
    "S16",
)
"""Operating points of the closed-loop THD comparison"""

BUILTIN_SCENARIOS: dict[str, ScenarioConfig] = {
    s.scenario_id: s
    for s in (NOMINAL, *TRAINING_CONDITIONS, *FEATURE_STUDY_SCENARIOS)
}

_GROUPS: dict[str, tuple[str, ...]] = {
    "all-training": tuple(s.scenario_id for s in TRAINING_CONDITIONS),
    "all-feature-study": tuple(s.scenario_id for s in FEATURE_STUDY_SCENARIOS),
    "thd-comparison": FIG13_SCENARIO_IDS,
}

_RANGE_RE = re.compile(r"^([A-Za-z]+)(\d+)\.\.\1?(\d+)$")


def _expand(token: str) -> list[str]:
    if token in _GROUPS:
        return list(_GROUPS[token])
    m = _RANGE_RE.match(token)
    if m is None:
        return [token]
    prefix, lo, hi = m.group(1), int(m.group(2)), int(m.group(3))
    if hi < lo:
        msg = f"empty scenario range {token!r}"
        raise ValueError(msg)
    return [f"{prefix}{n}" for n in range(lo, hi + 1)]


def select_scenarios(
    expr: str,
    *,
    duration: float | None = None,
    transient: float | None = None,
) -> list[ScenarioConfig]:
    """Resolve a selection expression into built-in scenarios

    The expression is a comma-separated list of ids (``S2``), ranges
    (``C1..C11``, ``S1..4``) and groups (``all-training``,
    ``all-feature-study``, ``thd-comparison``). Duplicates are dropped, order
    is kept.

    Raises
    ------
    ValueError
        If an id is unknown
    """
    ids: list[str] = []
    for raw in expr.split(","):
        token = raw.strip()
        if not token:
            continue
        ids.extend(i for i in _expand(token) if i not in ids)

    unknown = [i for i in ids if i not in BUILTIN_SCENARIOS]
    if unknown:
        msg = f"unknown scenario id(s): {', '.join(unknown)}"
        raise ValueError(msg)

    update: dict[str, float] = {}
    if duration is not None:
        update["duration"] = duration
    if transient is not None:
        update["transient"] = transient
    out = [BUILTIN_SCENARIOS[i].model_copy(update=update) for i in ids]
    logger.debug("selected scenarios %s", [s.scenario_id for s in out])
    return out
