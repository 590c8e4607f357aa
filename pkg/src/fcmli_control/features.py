"""Input-feature encodings of the imitation classifier"""

from __future__ import annotations

import enum
import typing as ty

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import FeatureVariantError

if ty.TYPE_CHECKING:
    from .mpc import PhaseMeasurement, References


class FeatureVariant(str, enum.Enum):
    """The five candidate feature sets"""

    X1 = "X1"
    X2 = "X2"
    X3 = "X3"
    X4 = "X4"
    X5 = "X5"

    @classmethod
    def parse(cls, value: str | FeatureVariant) -> FeatureVariant:
        """Parse a variant tag, case-insensitively

        Raises
        ------
        FeatureVariantError
            If the tag names no variant
        """
        if isinstance(value, FeatureVariant):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            msg = f"unknown feature variant {value!r}; expected one of X1..X5"
            raise FeatureVariantError(msg) from None

    @property
    def columns(self) -> tuple[str, ...]:
        """Feature column names, in encoding order"""
        return FEATURE_COLUMNS[self]

    @property
    def size(self) -> int:
        """Number of raw feature components"""
        return len(FEATURE_COLUMNS[self])

    @property
    def input_size(self) -> int:
        """Network input width once ``s_opt_prev`` is one-hot expanded"""
        return self.size - 1 + N_STATES


N_STATES = 8

FEATURE_COLUMNS: dict[FeatureVariant, tuple[str, ...]] = {
    FeatureVariant.X1: (
        "v1",
        "v2",
        "i_ref",
        "i",
        "dv1",
        "dv2",
        "di",
        "s_opt_prev",
        "v_ph",
    ),
    FeatureVariant.X2: ("v1", "v2", "i_ref", "i", "dv1", "dv2", "two_di", "s_opt_prev"),
    FeatureVariant.X3: ("v1", "v2", "i_ref", "i", "dv1", "dv2", "di", "s_opt_prev"),
    FeatureVariant.X4: ("v2", "i_ref", "i", "dv1", "dv2", "di", "s_opt_prev"),
    FeatureVariant.X5: ("i_ref", "i", "dv1", "dv2", "di", "s_opt_prev"),
}


def feature_matrix(  # noqa: PLR0913
    variant: str | FeatureVariant,
    *,
    v1: ArrayLike,
    v2: ArrayLike,
    i: ArrayLike,
    i_ref: ArrayLike,
    v1_ref: ArrayLike,
    v2_ref: ArrayLike,
    s_opt_prev: ArrayLike,
    v_ph: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Vectorized feature extraction

    All inputs broadcast together; the result has one trailing axis holding
    the variant's components. ``dv1 = v1_ref - v1``, ``dv2 = v2_ref - v2``,
    ``di = i_ref - i``.

    Raises
    ------
    FeatureVariantError
        If the variant is unknown
    ValueError
        If X1 is requested without ``v_ph``
    """
    variant = FeatureVariant.parse(variant)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    i = np.asarray(i, dtype=np.float64)
    i_ref = np.asarray(i_ref, dtype=np.float64)
    di = i_ref - i
    components: dict[str, NDArray] = {
        "v1": v1,
        "v2": v2,
        "i_ref": i_ref,
        "i": i,
        "dv1": np.asarray(v1_ref, dtype=np.float64) - v1,
        "dv2": np.asarray(v2_ref, dtype=np.float64) - v2,
        "di": di,
        "two_di": 2 * di,
        "s_opt_prev": np.asarray(s_opt_prev, dtype=np.float64),
    }
    if variant is FeatureVariant.X1:
        if v_ph is None:
            msg = "feature variant X1 needs the phase voltage v_ph"
            raise ValueError(msg)
        components["v_ph"] = np.asarray(v_ph, dtype=np.float64)

    cols = np.broadcast_arrays(*(components[c] for c in variant.columns))
    return np.stack(cols, axis=-1)


def extract_features(
    variant: str | FeatureVariant,
    meas: PhaseMeasurement,
    refs: References,
    s_opt_prev: int,
    v_ph: float | None = None,
) -> NDArray[np.float64]:
    """Feature vector of one leg at one sampling instant"""
    return feature_matrix(
        variant,
        v1=meas.v1,
        v2=meas.v2,
        i=meas.i,
        i_ref=refs.i_ref,
        v1_ref=refs.v1_ref,
        v2_ref=refs.v2_ref,
        s_opt_prev=s_opt_prev,
        v_ph=v_ph,
    )


def expand_features(variant: str | FeatureVariant, x: ArrayLike) -> NDArray[np.float64]:
    """Replace the ``s_opt_prev`` column by an 8-wide one-hot block

    The block takes the column's place, so the network input keeps the
    variant's ordering.

    Raises
    ------
    ValueError
        If ``x`` has the wrong width or a state index outside 0..7
    """
    variant = FeatureVariant.parse(variant)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[-1] != variant.size:
        msg = f"{variant.value} has {variant.size} features, got {x.shape[-1]}"
        raise ValueError(msg)

    k = variant.columns.index("s_opt_prev")
    states = x[:, k]
    idx = states.astype(np.int64)
    if np.any(idx != states) or np.any((idx < 0) | (idx >= N_STATES)):
        msg = "s_opt_prev must hold integer state indices 0..7"
        raise ValueError(msg)
    one_hot = np.eye(N_STATES)[idx]
    return np.concatenate([x[:, :k], one_hot, x[:, k + 1 :]], axis=1)
