"""Exceptions raised by fcmli_control"""

from __future__ import annotations

import typing as ty

if ty.TYPE_CHECKING:
    from collections.abc import Mapping


class FcmliError(Exception):
    """Base class for all domain errors of this package"""


class SimulationDivergedError(FcmliError):
    """The plant state became non-finite

    Parameters
    ----------
    t : float
        Simulation time [s] at which the blow-up was detected
    state : Mapping[str, object]
        Snapshot of the offending state, for the diagnostic
    """

    def __init__(self, t: float, state: Mapping[str, object]) -> None:
        self.t = t
        self.state = dict(state)
        summary = ", ".join(f"{k}={v}" for k, v in self.state.items())
        super().__init__(f"plant state became non-finite at t={t:.6g} s ({summary})")


class FeatureVariantError(FcmliError, ValueError):
    """Unknown input-feature encoding"""


class DimensionMismatchError(FcmliError, ValueError):
    """An input array does not match the model's input size"""


class ModelMismatchError(FcmliError, ValueError):
    """A trained model was used with an incompatible feature encoding"""


class ThdWindowError(FcmliError, ValueError):
    """The analysis window does not span an integer number of cycles"""


class TrainingDivergedError(FcmliError):
    """The training loss became non-finite"""
