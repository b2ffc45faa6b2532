"""Core domain types: series, captions, dataset records, and normalization.

Every series carries the five standard surface channels in fixed order:
temperature (K), pressure (hPa), humidity (%), wind speed (m/s) and
precipitation (mm). All value objects are immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum

import numpy as np

CHANNELS = ("temperature", "pressure", "humidity", "wind", "precipitation")
N_CHANNELS = len(CHANNELS)

ROUND_TRIP_TOL = 1e-10


class SpectracastError(Exception):
    """Base class for all package errors."""


class InputValidationError(SpectracastError):
    """Bad arguments or malformed input data (CLI exit code 2)."""


class ChannelMismatchError(InputValidationError):
    pass


class DegenerateChannelError(InputValidationError):
    pass


class ClimateZone(str, Enum):
    TROPICAL = "tropical"
    ARID = "arid"
    TEMPERATE = "temperate"
    CONTINENTAL = "continental"
    POLAR = "polar"
    HIGHLAND = "highland"
    OCEANIC = "oceanic"
    UNKNOWN = "unknown"


class GeneratorRole(str, Enum):
    STANDARD_REPORT = "standard_report"
    TREND_ANALYSIS = "trend_analysis"
    CASUAL = "casual"


class ReflectorStatus(str, Enum):
    PENDING = "pending"
    PASS = "pass"
    REJECT = "reject"


class ReviewerDecision(str, Enum):
    NONE = "none"
    APPROVE = "approve"
    REJECT = "reject"
    EDIT = "edit"


class Category(str, Enum):
    STEADY = "steady"
    TRANSITIONAL = "transitional"
    VOLATILE = "volatile"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def _frozen_array(values, shape_hint: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputValidationError(f"{shape_hint} contains non-finite values")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def resolve_channel(channel: int | str) -> int:
    """Map a channel name or index onto the fixed channel order."""
    if isinstance(channel, str):
        try:
            return CHANNELS.index(channel)
        except ValueError:
            raise ChannelMismatchError(f"unknown channel {channel!r}") from None
    idx = int(channel)
    if not 0 <= idx < N_CHANNELS:
        raise ChannelMismatchError(f"channel index {idx} out of range [0, {N_CHANNELS})")
    return idx


@dataclass(frozen=True)
class TimeSeries:
    """Multivariate observation sequence on a regular hourly-style grid."""

    values: np.ndarray  # [T, C] float64
    start_time: datetime
    step: timedelta = timedelta(hours=1)
    station_id: str = ""
    climate_zone: ClimateZone = ClimateZone.UNKNOWN

    def __post_init__(self):
        arr = _frozen_array(self.values, "series values")
        if arr.ndim != 2:
            raise InputValidationError(f"series values must be 2-D [T, C], got ndim={arr.ndim}")
        if arr.shape[0] < 2:
            raise InputValidationError(f"series needs T >= 2, got T={arr.shape[0]}")
        if arr.shape[1] != N_CHANNELS:
            raise ChannelMismatchError(
                f"expected {N_CHANNELS} channels {CHANNELS}, got {arr.shape[1]}"
            )
        object.__setattr__(self, "values", arr)
        if self.step.total_seconds() <= 0:
            raise InputValidationError("step must be positive")
        st = self.start_time
        if st.tzinfo is None:
            st = st.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "start_time", st.astimezone(timezone.utc))
        object.__setattr__(self, "climate_zone", ClimateZone(self.climate_zone))

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def channel(self, channel: int | str = "temperature") -> np.ndarray:
        return self.values[:, resolve_channel(channel)]

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return replace(self, values=values)


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel mean/std fitted on the training split."""

    mean: np.ndarray  # [C]
    std: np.ndarray  # [C]

    def __post_init__(self):
        mean = _frozen_array(self.mean, "normalization mean")
        std = _frozen_array(self.std, "normalization std")
        if mean.shape != (N_CHANNELS,) or std.shape != (N_CHANNELS,):
            raise ChannelMismatchError("normalization stats must have one entry per channel")
        if np.any(std <= 0):
            bad = [CHANNELS[i] for i in np.flatnonzero(std <= 0)]
            raise DegenerateChannelError(f"degenerate channel (zero variance): {', '.join(bad)}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, series_list: list[TimeSeries]) -> "NormalizationStats":
        if not series_list:
            raise InputValidationError("cannot fit normalization stats on an empty corpus")
        stacked = np.concatenate([s.values for s in series_list], axis=0)
        std = stacked.std(axis=0)
        if np.any(std < 1e-12):
            bad = [CHANNELS[i] for i in np.flatnonzero(std < 1e-12)]
            raise DegenerateChannelError(f"degenerate channel (zero variance): {', '.join(bad)}")
        return cls(mean=stacked.mean(axis=0), std=std)


def normalize(series: TimeSeries, stats: NormalizationStats) -> TimeSeries:
    """Per-channel (x - mean) / std using stats fitted on the training split."""
    if series.values.shape[1] != stats.mean.shape[0]:
        raise ChannelMismatchError("series channel count does not match normalization stats")
    return series.with_values((series.values - stats.mean) / stats.std)


def denormalize(series: TimeSeries, stats: NormalizationStats) -> TimeSeries:
    if series.values.shape[1] != stats.mean.shape[0]:
        raise ChannelMismatchError("series channel count does not match normalization stats")
    return series.with_values(series.values * stats.std + stats.mean)


def gradient(series: TimeSeries, channel: int | str = "temperature") -> np.ndarray:
    """First difference x_t - x_{t-1}; length T-1. Index i refers to step i+1."""
    return np.diff(series.channel(channel))


@dataclass(frozen=True)
class ChannelStats:
    min: float
    max: float
    mean: float
    std: float
    argmax: int
    argmin: int


@dataclass(frozen=True)
class PerceptionVector:
    """Structured numeric summary of a series produced by the perception phase.

    ``top_peaks`` holds (frequency in cycles/sample, fraction of non-DC power).
    ``anomaly_indices`` follow the gradient convention: index t flags the jump
    from sample t-1 to sample t, so valid values lie in [1, T-1].
    """

    trend_slope: float
    trend_p_value: float
    anomaly_indices: tuple[int, ...]
    top_peaks: tuple[tuple[float, float], ...]
    spectral_entropy: float
    acf_lag24: float
    channel_stats: dict[str, ChannelStats]
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.trend_p_value <= 1.0:
            raise InputValidationError("trend_p_value must lie in [0, 1]")
        if not -1e-9 <= self.spectral_entropy <= 1.0 + 1e-9:
            raise InputValidationError("spectral_entropy must lie in [0, 1]")
        if not -1.0 - 1e-9 <= self.acf_lag24 <= 1.0 + 1e-9:
            raise InputValidationError("acf_lag24 must lie in [-1, 1]")
        idx = self.anomaly_indices
        if any(b <= a for a, b in zip(idx, idx[1:])) or (idx and idx[0] < 1):
            raise InputValidationError("anomaly indices must be strictly increasing and >= 1")
        frac_total = sum(frac for _, frac in self.top_peaks)
        if frac_total > 1.0 + 1e-9:
            raise InputValidationError("peak power fractions must sum to at most 1")
        object.__setattr__(self, "anomaly_indices", tuple(int(i) for i in idx))
        object.__setattr__(
            self, "top_peaks", tuple((float(f), float(p)) for f, p in self.top_peaks)
        )

    @property
    def anomaly_count(self) -> int:
        return len(self.anomaly_indices)

    @property
    def top_peak_period(self) -> float:
        """Period in samples of the strongest peak, 0.0 when no peak was found."""
        if not self.top_peaks:
            return 0.0
        freq = self.top_peaks[0][0]
        return 1.0 / freq if freq > 0 else 0.0


@dataclass(frozen=True)
class CaptionRecord:
    """A candidate or accepted caption with provenance and review state."""

    series_ref: str
    text: str
    generator_role: GeneratorRole
    backend_id: str
    reflector_status: ReflectorStatus = ReflectorStatus.PENDING
    reflector_feedback: str = ""
    refine_round: int = 0
    utility_score: float = 0.0
    reviewer_decision: ReviewerDecision = ReviewerDecision.NONE
    s_pa: int | None = None
    s_sr: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "generator_role", GeneratorRole(self.generator_role))
        object.__setattr__(self, "reflector_status", ReflectorStatus(self.reflector_status))
        object.__setattr__(self, "reviewer_decision", ReviewerDecision(self.reviewer_decision))
        if self.refine_round < 0:
            raise InputValidationError("refine_round must be >= 0")
        for name in ("s_pa", "s_sr"):
            score = getattr(self, name)
            if score is not None and not 1 <= int(score) <= 5:
                raise InputValidationError(f"{name} must be in 1..5, got {score}")
        if not math.isfinite(self.utility_score):
            raise InputValidationError("utility_score must be finite")


@dataclass(frozen=True)
class DatasetRecord:
    """One corpus entry: a series, its caption candidates, and complexity labels."""

    series: TimeSeries
    captions: tuple[CaptionRecord, ...]
    complexity: float
    category: Category
    split: Split

    def __post_init__(self):
        object.__setattr__(self, "captions", tuple(self.captions))
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "split", Split(self.split))
        if not math.isfinite(self.complexity):
            raise InputValidationError("complexity must be finite")

    @property
    def series_ref(self) -> str:
        return self.series.station_id

    @property
    def accepted_caption(self) -> CaptionRecord | None:
        """The record's single accepted caption, if any.

        Reviewer approvals/edits take precedence; otherwise the pass-status
        candidate with the highest utility score (earliest on ties).
        """
        reviewed = [
            c
            for c in self.captions
            if c.reviewer_decision in (ReviewerDecision.APPROVE, ReviewerDecision.EDIT)
        ]
        if reviewed:
            return reviewed[0]
        passed = [c for c in self.captions if c.reflector_status is ReflectorStatus.PASS]
        if not passed:
            return None
        return max(passed, key=lambda c: c.utility_score)


# sentinel start time used by generators that have no real-world anchor
DEFAULT_START = datetime(2024, 1, 1, tzinfo=timezone.utc)


def make_series(
    values: np.ndarray,
    station_id: str = "",
    start_time: datetime = DEFAULT_START,
    step: timedelta = timedelta(hours=1),
    climate_zone: ClimateZone = ClimateZone.UNKNOWN,
) -> TimeSeries:
    return TimeSeries(
        values=values,
        start_time=start_time,
        step=step,
        station_id=station_id,
        climate_zone=climate_zone,
    )
