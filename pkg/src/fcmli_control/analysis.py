"""Spectral and tracking metrics of recorded runs"""

from __future__ import annotations

import logging
import math
import typing as ty
from collections.abc import Sequence

import numpy as np
import pandas as pd
import pydantic
import scipy.fft
import scipy.ndimage
from numpy.typing import ArrayLike, NDArray

from .errors import ThdWindowError
from .plant import PHASES
from .validation import FloatVector

if ty.TYPE_CHECKING:
    from .controller import TimeSeriesRun

logger = logging.getLogger(__name__)

DEFAULT_CYCLES = 5
DEFAULT_MAX_HARMONIC = 100

COMPARISON_COLUMNS = (
    "scenario_id",
    "controller",
    "thd_a",
    "thd_b",
    "thd_c",
    "thd_mean",
    "rms_err",
    "v1_ripple",
    "v2_ripple",
)


def _samples_per_cycle(sample_period: float, f0: float) -> int:
    spc = 1 / (f0 * sample_period)
    n = round(spc)
    if n < 1 or not math.isclose(spc, n, rel_tol=1e-6):
        msg = (
            f"a {f0} Hz cycle is {spc:.6g} samples at {sample_period} s; "
            "it must be an integer"
        )
        raise ThdWindowError(msg)
    return n


def _window(signal: ArrayLike, sample_period: float, f0: float, cycles: int) -> NDArray:
    if cycles < 1:
        msg = f"cycles must be >= 1, got {cycles}"
        raise ThdWindowError(msg)
    x = np.asarray(signal, dtype=np.float64)
    n = cycles * _samples_per_cycle(sample_period, f0)
    if len(x) < n:
        msg = f"{cycles} cycles need {n} samples, the signal has {len(x)}"
        raise ThdWindowError(msg)
    return x[len(x) - n :]


class Spectrum(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Single-sided amplitude spectrum of a window of whole fundamental cycles

    ``magnitudes`` are peak amplitudes (the DC and Nyquist bins are not
    doubled). Bin ``cycles * h`` holds harmonic ``h``.
    """

    frequencies: FloatVector
    magnitudes: FloatVector
    f0: float
    cycles: int
    n_window: int

    @property
    def resolution(self) -> float:
        """Bin spacing [Hz]"""
        return float(self.frequencies[1] - self.frequencies[0])

    @property
    def rms(self) -> NDArray:
        """RMS value of each bin; their squares sum to the window's mean square"""
        out = self.magnitudes / np.sqrt(2)
        out[0] = self.magnitudes[0]
        if self.n_window % 2 == 0:
            out[-1] = self.magnitudes[-1]
        return out

    @property
    def fundamental(self) -> float:
        """Peak amplitude at ``f0``"""
        return float(self.magnitudes[self.cycles])

    def harmonic(self, h: int) -> float:
        """Peak amplitude of harmonic ``h``"""
        return float(self.magnitudes[h * self.cycles])

    def normalized(self) -> NDArray:
        """Magnitudes in percent of the fundamental"""
        return 100 * self.magnitudes / self.fundamental


def spectrum(
    signal: ArrayLike,
    sample_period: float,
    f0: float,
    cycles: int = DEFAULT_CYCLES,
) -> Spectrum:
    """Rectangular-window spectrum of the final ``cycles`` fundamental periods

    Raises
    ------
    ThdWindowError
        If a cycle is not an integer number of samples or the signal is short
    """
    x = _window(signal, sample_period, f0, cycles)
    n = len(x)
    coeffs = np.abs(scipy.fft.rfft(x)) / n
    magnitudes = 2 * coeffs
    magnitudes[0] = coeffs[0]
    if n % 2 == 0:
        magnitudes[-1] = coeffs[-1]
    freqs = scipy.fft.rfftfreq(n, d=sample_period)
    return Spectrum(
        frequencies=freqs, magnitudes=magnitudes, f0=f0, cycles=cycles, n_window=n
    )


class ThdReport(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Total harmonic distortion of a window"""

    thd: float = pydantic.Field(ge=0)
    fundamental: float = pydantic.Field(gt=0)
    f0: float
    harmonics: tuple[int, int]
    window_start: float
    cycles: int


def thd(
    signal: ArrayLike,
    sample_period: float,
    f0: float,
    cycles: int = DEFAULT_CYCLES,
    max_harmonic: int | None = DEFAULT_MAX_HARMONIC,
) -> ThdReport:
    """Total harmonic distortion [%] over the final ``cycles`` periods

    ``thd = sqrt(sum(I_h^2, h=2..H)) / I_1 * 100`` with ``I_h`` the amplitude
    at ``h*f0``. ``H`` is ``max_harmonic``, capped below Nyquist; ``None``
    uses every harmonic below Nyquist.

    Raises
    ------
    ThdWindowError
        If the window does not fit or the fundamental is negligible
    """
    spec = spectrum(signal, sample_period, f0, cycles)
    below_nyquist = (math.ceil(spec.n_window / 2) - 1) // cycles
    top = below_nyquist if max_harmonic is None else min(max_harmonic, below_nyquist)

    fundamental = spec.fundamental
    floor = 1e-12 * max(float(np.max(np.abs(spec.magnitudes))), 1e-300)
    if fundamental <= floor:
        msg = f"fundamental magnitude {fundamental:.3g} is below the numeric floor"
        raise ThdWindowError(msg)

    bins = spec.magnitudes[np.arange(2, top + 1) * cycles] if top >= 2 else np.empty(0)
    value = float(np.sqrt(np.sum(bins * bins)) / fundamental * 100)
    total = len(np.asarray(signal))
    return ThdReport(
        thd=value,
        fundamental=fundamental,
        f0=f0,
        harmonics=(2, top),
        window_start=(total - spec.n_window) * sample_period,
        cycles=cycles,
    )


class SettlingResult(pydantic.BaseModel, frozen=True, extra="forbid"):
    """Settling of a tracking error after a reference step

    ``time`` is measured from ``step_time`` and is ``None`` when the error
    never stays inside the band within the record.
    """

    settled: bool
    time: float | None
    step_time: float
    band: float


def settling_time(  # noqa: PLR0913
    t: ArrayLike,
    current: ArrayLike,
    reference: ArrayLike,
    band: float = 5.0,
    *,
    step_time: float | None = None,
    smoothing: float | None = None,
) -> SettlingResult:
    """Time after a reference step until ``|i - i_ref|`` stays within the band

    The band is ``band`` percent of the largest reference magnitude after the
    step. ``smoothing`` applies a moving average of that many seconds to the
    error envelope. Without ``step_time`` the step is placed at the largest
    jump of the reference.

    Raises
    ------
    ValueError
        If fewer than two samples are given or the arrays differ in length
    """
    t = np.asarray(t, dtype=np.float64)
    i = np.asarray(current, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if len(t) < 2:  # noqa: PLR2004
        msg = f"settling needs at least two samples, got {len(t)}"
        raise ValueError(msg)
    if not len(t) == len(i) == len(ref):
        msg = f"length mismatch: t={len(t)}, current={len(i)}, reference={len(ref)}"
        raise ValueError(msg)
    if step_time is None:
        jump = int(np.argmax(np.abs(np.diff(ref)))) + 1
        step_time = float(t[jump])

    after = t >= step_time
    envelope = np.abs(i - ref)
    if smoothing:
        width = max(1, round(smoothing / float(t[1] - t[0])))
        envelope = scipy.ndimage.uniform_filter1d(envelope, size=width, mode="nearest")

    amplitude = float(np.max(np.abs(ref[after]))) if np.any(after) else 0.0
    threshold = band / 100 * amplitude
    env_after = envelope[after]
    t_after = t[after]
    outside = np.flatnonzero(env_after > threshold)
    if len(outside) == 0:
        return SettlingResult(
            settled=True, time=0.0, step_time=step_time, band=threshold
        )
    last = int(outside[-1])
    if last == len(env_after) - 1:
        return SettlingResult(
            settled=False, time=None, step_time=step_time, band=threshold
        )
    return SettlingResult(
        settled=True,
        time=float(t_after[last + 1] - step_time),
        step_time=step_time,
        band=threshold,
    )


def _window_rows(run: TimeSeriesRun, cycles: int) -> pd.DataFrame:
    n = cycles * _samples_per_cycle(run.sample_period, run.f0)
    if len(run.frame) < n:
        msg = f"run {run.scenario_id} is shorter than {cycles} cycles"
        raise ThdWindowError(msg)
    return run.frame.iloc[len(run.frame) - n :]


def tracking_rms_error(run: TimeSeriesRun, cycles: int = DEFAULT_CYCLES) -> float:
    """RMS of ``i - i_ref`` over the final cycles, pooled over the legs"""
    w = _window_rows(run, cycles)
    err = np.stack([w[f"i_{p}"] - w[f"iref_{p}"] for p in PHASES])
    return float(np.sqrt(np.mean(err * err)))


def capacitor_ripple(
    run: TimeSeriesRun, cycles: int = DEFAULT_CYCLES
) -> tuple[float, float]:
    """Largest peak-to-peak swing of the inner and outer capacitor voltages"""
    w = _window_rows(run, cycles)
    v1 = max(float(np.ptp(w[f"v1_{p}"])) for p in PHASES)
    v2 = max(float(np.ptp(w[f"v2_{p}"])) for p in PHASES)
    return v1, v2


def run_thd(
    run: TimeSeriesRun,
    channel: str = "i_a",
    cycles: int = DEFAULT_CYCLES,
    max_harmonic: int | None = DEFAULT_MAX_HARMONIC,
) -> ThdReport:
    """THD of one recorded channel over the run's final cycles"""
    signal = run.frame[channel].to_numpy()
    return thd(signal, run.sample_period, run.f0, cycles, max_harmonic)


def compare_runs(
    runs: Sequence[TimeSeriesRun],
    cycles: int | None = None,
    max_harmonic: int | None = DEFAULT_MAX_HARMONIC,
) -> pd.DataFrame:
    """One row of THD, tracking and ripple metrics per run

    ``cycles`` defaults to each run's ``analysis_cycles``.

    Raises
    ------
    ThdWindowError
        If the runs disagree on the fundamental frequency or a window does
        not fit
    """
    f0s = {run.f0 for run in runs}
    if len(f0s) > 1:
        msg = f"runs use different fundamental frequencies: {sorted(f0s)}"
        raise ThdWindowError(msg)

    rows = []
    for run in runs:
        n_cycles = cycles or run.metadata.script.analysis_cycles
        thds = [run_thd(run, f"i_{p}", n_cycles, max_harmonic).thd for p in PHASES]
        v1_ripple, v2_ripple = capacitor_ripple(run, n_cycles)
        rows.append(
            (
                run.scenario_id,
                run.controller_kind,
                *thds,
                float(np.mean(thds)),
                tracking_rms_error(run, n_cycles),
                v1_ripple,
                v2_ripple,
            )
        )
        logger.info(
            "%s/%s: THD %.3f %% (mean)",
            run.scenario_id,
            run.controller_kind,
            rows[-1][5],
        )
    return pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS))
