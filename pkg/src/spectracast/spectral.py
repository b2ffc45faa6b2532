"""Frequency and temporal analytics.

Implements the perception tools (trend detection, anomaly seeking, FFT
analysis) plus spectral entropy, autocorrelation, largest-Lyapunov-exponent
estimation (Rosenstein nearest-neighbor divergence) and the dynamical
complexity index used for corpus categorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import signal as sp_signal
from scipy import stats as sp_stats
from scipy.spatial import cKDTree

from .core import InputValidationError, TimeSeries, resolve_channel

# clamp range for min-max normalizing the Lyapunov exponent inside the D-index
LYAPUNOV_NORM_RANGE = (0.0, 1.0)
DEFAULT_COMPLEXITY_WEIGHTS = (0.5, 0.5)
TREND_SIGNIFICANCE = 0.01
TREND_SLOPE_FLOOR = 1e-12


class TrendDirection(str, Enum):
    UP = "up"
    DOWN = "down"
    FLAT = "flat"


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectrum in cycles/sample.

    Power is scaled so that ``sum(power) == sum(x**2)`` for the transformed
    signal (Parseval), with DC and Nyquist bins counted once and interior
    bins twice.
    """

    frequencies: np.ndarray
    power: np.ndarray
    n_samples: int

    def __post_init__(self):
        if self.frequencies.shape != self.power.shape:
            raise InputValidationError("spectrum frequency/power arrays must match")

    @property
    def total_power(self) -> float:
        return float(self.power.sum())

    @property
    def nondc_power(self) -> np.ndarray:
        return self.power[1:]

    @property
    def nondc_frequencies(self) -> np.ndarray:
        return self.frequencies[1:]


@dataclass(frozen=True)
class TrendReport:
    slope: float
    intercept: float
    p_value: float
    direction: TrendDirection


@dataclass(frozen=True)
class ComplexityScore:
    lyapunov: float
    lyapunov_norm: float
    spectral_entropy: float
    d_index: float


def _as_1d(x, min_len: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InputValidationError(f"{name} expects a 1-D array, got ndim={arr.ndim}")
    if arr.shape[0] < min_len:
        raise InputValidationError(f"{name} needs at least {min_len} samples, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InputValidationError(f"{name} input contains non-finite values")
    return arr


def fft_spectrum(x, detrend: bool = False) -> Spectrum:
    """One-sided power spectrum; `detrend` removes the OLS linear trend first."""
    arr = _as_1d(x, 8, "fft_spectrum")
    if detrend:
        arr = sp_signal.detrend(arr, type="linear")
    n = arr.shape[0]
    coeffs = np.fft.rfft(arr)
    power = np.abs(coeffs) ** 2 / n
    scale = np.full(power.shape, 2.0)
    scale[0] = 1.0
    if n % 2 == 0:
        scale[-1] = 1.0
    power = power * scale
    freqs = np.fft.rfftfreq(n, d=1.0)
    return Spectrum(frequencies=freqs, power=power, n_samples=n)


def parseval_gap(spectrum: Spectrum, x) -> float:
    """Relative gap between sum(x**2) and the spectral total."""
    arr = np.asarray(x, dtype=np.float64)
    energy = float(np.sum(arr**2))
    if energy == 0.0:
        return abs(spectrum.total_power)
    return abs(spectrum.total_power - energy) / energy


def top_k_peaks(spectrum: Spectrum, k: int) -> list[tuple[float, float]]:
    """The k strongest strict local maxima as (period_samples, power_fraction).

    Fractions are relative to total non-DC power; results are sorted by
    descending power with ties broken toward lower frequency. Fewer than k
    entries are returned when the spectrum has fewer local maxima.
    """
    if k < 1:
        raise InputValidationError("top_k_peaks needs k >= 1")
    power = spectrum.nondc_power
    freqs = spectrum.nondc_frequencies
    total = float(power.sum())
    if total <= 0.0 or power.shape[0] < 1:
        return []
    peaks = []
    for i in range(power.shape[0]):
        left = power[i - 1] if i > 0 else -np.inf
        right = power[i + 1] if i < power.shape[0] - 1 else -np.inf
        if power[i] > left and power[i] > right:
            peaks.append(i)
    # ties broken toward lower frequency: stable sort on descending power
    peaks.sort(key=lambda i: (-power[i], freqs[i]))
    out = []
    for i in peaks[:k]:
        period = 1.0 / freqs[i]
        out.append((float(period), float(power[i] / total)))
    return out


def spectral_entropy(spectrum: Spectrum) -> float:
    """Shannon entropy of normalized non-DC power, scaled to [0, 1].

    Power totals at float-residue level (e.g. a detrended constant) count as
    zero-power spectra.
    """
    power = spectrum.nondc_power
    total = float(power.sum())
    if total <= 1e-18 * max(1, spectrum.n_samples):
        raise InputValidationError("zero-power spectrum has undefined entropy")
    if power.shape[0] < 2:
        return 0.0
    p = power / total
    nz = p[p > 0]
    h = float(-(nz * np.log(nz)).sum())
    return min(1.0, max(0.0, h / np.log(power.shape[0])))


def detect_trend(
    x,
    window: int = 24,
    significance: float = TREND_SIGNIFICANCE,
    slope_floor: float = TREND_SLOPE_FLOOR,
) -> TrendReport:
    """OLS trend over the full series with a two-sided t-test on the slope.

    `window` mirrors the perception tool signature and only tightens the
    minimum-length requirement; the fit always uses the whole series.
    """
    arr = _as_1d(x, max(3, window if window > 0 else 3), "detect_trend")
    n = arr.shape[0]
    t = np.arange(n, dtype=np.float64)
    slope, intercept = np.polyfit(t, arr, 1)
    resid = arr - (slope * t + intercept)
    ss_res = float(resid @ resid)
    ss_t = float(((t - t.mean()) ** 2).sum())
    if ss_res <= 1e-24 * max(1.0, float(arr @ arr)):
        # noiseless fit: slope exact, p collapses to 0 unless slope is zero too
        p_value = 1.0 if abs(slope) < slope_floor else 0.0
    else:
        se = np.sqrt(ss_res / (n - 2) / ss_t)
        t_stat = slope / se
        p_value = float(2.0 * sp_stats.t.sf(abs(t_stat), df=n - 2))
    if p_value >= significance or abs(slope) < slope_floor:
        direction = TrendDirection.FLAT
    else:
        direction = TrendDirection.UP if slope > 0 else TrendDirection.DOWN
    return TrendReport(
        slope=float(slope), intercept=float(intercept), p_value=p_value, direction=direction
    )


def seek_anomalies(x, delta: float | str = "auto") -> list[int]:
    """Indices t with |x_t - x_{t-1}| > delta; auto sets delta = 3*std(diffs)."""
    arr = _as_1d(x, 2, "seek_anomalies")
    signed = np.diff(arr)
    diffs = np.abs(signed)
    if isinstance(delta, str):
        if delta != "auto":
            raise InputValidationError(f"delta must be a positive number or 'auto', got {delta!r}")
        threshold = 3.0 * float(np.std(signed))
    else:
        threshold = float(delta)
        if threshold <= 0:
            raise InputValidationError("explicit delta must be positive")
    return [int(i) + 1 for i in np.flatnonzero(diffs > threshold)]


def autocorrelation(x, lag: int) -> float:
    """Pearson correlation of x with itself shifted by `lag` samples."""
    arr = _as_1d(x, 2, "autocorrelation")
    if not 0 < lag < arr.shape[0]:
        raise InputValidationError(f"lag must lie in [1, {arr.shape[0] - 1}], got {lag}")
    a = arr[:-lag]
    b = arr[lag:]
    if np.std(a) < 1e-15 or np.std(b) < 1e-15:
        raise InputValidationError("autocorrelation undefined for zero-variance input")
    r = np.corrcoef(a, b)[0, 1]
    return float(np.clip(r, -1.0, 1.0))


def _delay_embed(x: np.ndarray, dim: int, delay: int) -> np.ndarray:
    n = x.shape[0] - (dim - 1) * delay
    return np.stack([x[i * delay : i * delay + n] for i in range(dim)], axis=1)


def _mean_period(x: np.ndarray) -> float:
    """Reciprocal of the power-weighted mean frequency of the detrended signal."""
    spec = fft_spectrum(x, detrend=True)
    power = spec.nondc_power
    freqs = spec.nondc_frequencies
    total = float(power.sum())
    if total <= 0:
        return 1.0
    mean_freq = float((freqs * power).sum() / total)
    if mean_freq <= 0:
        return 1.0
    return 1.0 / mean_freq


def lyapunov_exponent(
    x,
    embed_dim: int = 3,
    delay: int = 1,
    fit_window: tuple[int, int] = (0, 5),
    theiler: int | None = None,
) -> float:
    """Largest Lyapunov exponent (nats/sample) via Rosenstein's method.

    Delay-embeds the series, pairs each point with its nearest neighbor
    outside a Theiler window, tracks the mean log divergence over time and
    fits a line across `fit_window` steps.
    """
    arr = _as_1d(x, 200, "lyapunov_exponent")
    if np.ptp(arr) < 1e-15:
        raise InputValidationError("lyapunov_exponent undefined for constant input")
    emb = _delay_embed(arr, embed_dim, delay)
    n = emb.shape[0]
    if theiler is None:
        theiler = int(np.clip(round(_mean_period(arr)), 1, n // 10))
    fit_lo, fit_hi = fit_window
    max_step = fit_hi
    usable = n - max_step
    if usable <= theiler + 2:
        raise InputValidationError("series too short for the requested divergence window")

    # exactly periodic inputs produce same-phase neighbors at machine-epsilon
    # distance; pairs below this floor are float noise, not dynamics
    min_dist = 1e-8 * float(np.std(arr))
    tree = cKDTree(emb[:usable])
    neighbor = np.full(usable, -1, dtype=np.int64)
    k = min(usable, 2 * theiler + 4)
    pending = np.arange(usable)
    while pending.size and k <= usable:
        dists, idxs = tree.query(emb[pending], k=k)
        still = []
        for row, i in enumerate(pending):
            for d, j in zip(dists[row], idxs[row]):
                if abs(int(j) - i) > theiler and d > min_dist:
                    neighbor[i] = int(j)
                    break
            else:
                still.append(i)
        pending = np.asarray(still, dtype=np.int64)
        if k == usable:
            break
        k = min(usable, k * 4)
    valid = neighbor >= 0
    i_idx = np.flatnonzero(valid)
    j_idx = neighbor[valid]
    if i_idx.shape[0] < 10:
        raise InputValidationError("not enough valid neighbor pairs for divergence tracking")

    log_div = np.empty(max_step + 1)
    for step in range(max_step + 1):
        d = np.linalg.norm(emb[i_idx + step] - emb[j_idx + step], axis=1)
        d = d[d > min_dist]
        if d.shape[0] == 0:
            log_div[step] = log_div[step - 1] if step > 0 else np.log(max(min_dist, 1e-12))
        else:
            log_div[step] = float(np.mean(np.log(d)))
    steps = np.arange(fit_lo, fit_hi + 1, dtype=np.float64)
    slope, _ = np.polyfit(steps, log_div[fit_lo : fit_hi + 1], 1)
    return float(slope)


def complexity_index(
    series: TimeSeries,
    weights: tuple[float, float] = DEFAULT_COMPLEXITY_WEIGHTS,
    channel: int | str = "temperature",
) -> ComplexityScore:
    """Dynamical complexity: convex blend of normalized Lyapunov and entropy."""
    w_lyap, w_ent = weights
    if w_lyap < 0 or w_ent < 0 or abs(w_lyap + w_ent - 1.0) > 1e-9:
        raise InputValidationError("complexity weights must be nonnegative and sum to 1")
    x = series.channel(channel)
    entropy = spectral_entropy(fft_spectrum(x, detrend=True))
    if w_lyap == 0.0:
        lyap = 0.0
        lyap_norm = 0.0
    else:
        lyap = lyapunov_exponent(x)
        lo, hi = LYAPUNOV_NORM_RANGE
        lyap_norm = float(np.clip((lyap - lo) / (hi - lo), 0.0, 1.0))
    d_index = w_lyap * lyap_norm + w_ent * entropy
    return ComplexityScore(
        lyapunov=lyap,
        lyapunov_norm=lyap_norm,
        spectral_entropy=entropy,
        d_index=float(d_index),
    )


def channel_summary(series: TimeSeries) -> dict:
    """Per-channel (min, max, mean, std, argmax, argmin) for perception output."""
    from .core import CHANNELS, ChannelStats

    out = {}
    for name in CHANNELS:
        col = series.channel(name)
        out[name] = ChannelStats(
            min=float(col.min()),
            max=float(col.max()),
            mean=float(col.mean()),
            std=float(col.std()),
            argmax=int(col.argmax()),
            argmin=int(col.argmin()),
        )
    return out


def perceive(series: TimeSeries, top_k: int = 3, channel: int | str = "temperature"):
    """Run the full local tool stack and assemble a PerceptionVector."""
    from .core import PerceptionVector

    x = series.channel(channel)
    trend = detect_trend(x)
    spec = fft_spectrum(x, detrend=True)
    peaks = top_k_peaks(spec, top_k)
    top = tuple((1.0 / period, frac) for period, frac in peaks if period > 0)
    entropy = spectral_entropy(spec)
    lag = min(24, series.length - 1)
    try:
        acf24 = autocorrelation(x, lag)
    except InputValidationError:
        acf24 = 0.0
    return PerceptionVector(
        trend_slope=trend.slope,
        trend_p_value=trend.p_value,
        anomaly_indices=tuple(seek_anomalies(x, "auto")),
        top_peaks=top,
        spectral_entropy=entropy,
        acf_lag24=acf24,
        channel_stats=channel_summary(series),
    )
