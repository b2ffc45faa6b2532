"""Synthetic weather generation, complexity categorization, and persistence.

The generator stands in for a real observation archive: deterministic,
regime-labelled multichannel series with a diurnal cycle, optional front-like
events, and regime-dependent noise. Records serialize to line-delimited JSON
with a checked schema version.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .core import (
    CHANNELS,
    Category,
    CaptionRecord,
    ClimateZone,
    DatasetRecord,
    InputValidationError,
    N_CHANNELS,
    SpectracastError,
    Split,
    TimeSeries,
    make_series,
)
from .spectral import autocorrelation, complexity_index

SCHEMA_VERSION = 1
DEFAULT_LENGTH = 240  # ten days hourly; long enough for the Lyapunov estimator
SPLIT_RATIOS = (0.7, 0.2, 0.1)

_BASE_LEVELS = {
    "temperature": 288.0,
    "pressure": 1013.0,
    "humidity": 60.0,
    "wind": 4.0,
    "precipitation": 0.0,
}
_NOISE_SCALE = {
    "temperature": 1.0,
    "pressure": 0.6,
    "humidity": 2.5,
    "wind": 0.6,
    "precipitation": 0.0,
}


class DatasetFormatError(InputValidationError):
    pass


class DegenerateDistributionError(InputValidationError):
    pass


@dataclass(frozen=True)
class EventSpec:
    """A smoothed front passage: temperature drop plus pressure rise."""

    event_time: int
    magnitude: float = -12.0  # temperature change in K; pressure moves opposite
    width: float = 0.3  # logistic time constant in samples


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int
    regime: Category = Category.STEADY
    length: int = DEFAULT_LENGTH
    base_level: dict = field(default_factory=dict)  # per-channel overrides
    diurnal_amplitude: float = 5.0
    diurnal_phase: float = 0.0  # hours, shifts the daily cycle
    trend_slope: float = 0.0  # temperature K per step
    noise_std: float = 0.25  # scale factor on per-channel noise
    event_spec: EventSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Category(self.regime))
        if self.length < 48:
            raise InputValidationError("synthetic series need length >= 48")
        if self.noise_std < 0:
            raise InputValidationError("noise_std must be >= 0")


def _smooth_step(t: np.ndarray, event: EventSpec) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-(t - event.event_time) / max(event.width, 1e-6)))


def _event_pulse(t: np.ndarray, event: EventSpec, span: float) -> np.ndarray:
    return np.exp(-0.5 * ((t - event.event_time) / span) ** 2)


def generate_synthetic(spec: SyntheticSpec) -> TimeSeries:
    """Deterministic regime-conditioned weather series for a fixed seed."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length, dtype=np.float64)
    base = dict(_BASE_LEVELS)
    base.update(spec.base_level)

    diurnal = np.sin(2 * np.pi * (t - 9.0 + spec.diurnal_phase) / 24.0)  # afternoon peak
    values = np.zeros((spec.length, N_CHANNELS))

    if spec.regime is Category.VOLATILE:
        amp = min(spec.diurnal_amplitude, 2.0)
        noise_gain = max(spec.noise_std, 1.0) * 1.4
        n_events = int(rng.integers(2, 6))
        events = [
            EventSpec(
                event_time=int(rng.integers(12, spec.length - 12)),
                magnitude=float(rng.uniform(4.0, 12.0) * rng.choice([-1.0, 1.0])),
                width=float(rng.uniform(0.4, 1.2)),
            )
            for _ in range(n_events)
        ]
    else:
        amp = spec.diurnal_amplitude
        noise_gain = spec.noise_std
        events = []
        if spec.regime is Category.TRANSITIONAL:
            default_event = EventSpec(
                event_time=int(rng.integers(spec.length // 3, 2 * spec.length // 3))
            )
            events = [spec.event_spec or default_event]
        elif spec.event_spec is not None:
            events = [spec.event_spec]

    def noise(channel: str, heavy: bool) -> np.ndarray:
        scale = _NOISE_SCALE[channel] * noise_gain
        if scale == 0:
            return np.zeros(spec.length)
        if heavy:
            return scale * rng.standard_t(df=3, size=spec.length)
        return scale * rng.standard_normal(spec.length)

    heavy = spec.regime is Category.VOLATILE
    temp = base["temperature"] + amp * diurnal + spec.trend_slope * t + noise("temperature", heavy)
    press = base["pressure"] + 0.3 * amp * np.sin(4 * np.pi * t / 24.0) + noise("pressure", heavy)
    humid = base["humidity"] - 2.0 * amp * diurnal / max(spec.diurnal_amplitude, 1e-9) * 5.0
    humid = humid + noise("humidity", heavy)
    wind = base["wind"] + 1.2 * np.clip(diurnal, 0, None) + np.abs(noise("wind", heavy))
    precip = np.zeros(spec.length)

    for ev in events:
        step_shape = _smooth_step(t, ev)
        pulse = _event_pulse(t, ev, span=max(2.0, 3.0 * ev.width))
        temp = temp + ev.magnitude * step_shape
        press = press - 0.9 * ev.magnitude * step_shape
        humid = humid - 1.5 * ev.magnitude * pulse
        wind = wind + 0.45 * abs(ev.magnitude) * pulse
        if ev.magnitude < 0:  # cold fronts bring showers
            precip = precip + 0.25 * abs(ev.magnitude) * pulse * rng.uniform(0.5, 1.0)

    values[:, CHANNELS.index("temperature")] = temp
    values[:, CHANNELS.index("pressure")] = press
    values[:, CHANNELS.index("humidity")] = np.clip(humid, 0.0, 100.0)
    values[:, CHANNELS.index("wind")] = np.clip(wind, 0.0, None)
    values[:, CHANNELS.index("precipitation")] = np.clip(precip, 0.0, None)

    return make_series(
        values,
        station_id=f"syn-{spec.regime.value}-{spec.seed:08d}",
        climate_zone=ClimateZone.TEMPERATE,
    )


@dataclass(frozen=True)
class CategoryThresholds:
    delta1: float
    delta2: float

    def __post_init__(self):
        if not 0.0 < self.delta1 < self.delta2 < 1.0:
            raise InputValidationError(
                f"thresholds must satisfy 0 < delta1 < delta2 < 1, got "
                f"({self.delta1}, {self.delta2})"
            )


def calibrate_thresholds(
    d_values, targets: tuple[float, float, float] = (0.60, 0.30, 0.10)
) -> CategoryThresholds:
    """Percentile calibration so the categories hit the target proportions."""
    d = np.asarray(d_values, dtype=np.float64)
    if d.shape[0] < 10:
        raise InputValidationError("threshold calibration needs at least 10 values")
    if np.ptp(d) < 1e-12:
        raise DegenerateDistributionError("degenerate distribution: all complexity values equal")
    if abs(sum(targets) - 1.0) > 1e-9:
        raise InputValidationError("category targets must sum to 1")
    p1 = 100.0 * targets[0]
    p2 = 100.0 * (targets[0] + targets[1])
    delta1 = float(np.percentile(d, p1))
    delta2 = float(np.percentile(d, p2))
    return CategoryThresholds(delta1=delta1, delta2=delta2)


def categorize(d: float, thresholds: CategoryThresholds) -> Category:
    if d < thresholds.delta1:
        return Category.STEADY
    if d < thresholds.delta2:
        return Category.TRANSITIONAL
    return Category.VOLATILE


def _split_hash(seed: int, ref: str) -> str:
    return hashlib.md5(f"{seed}:{ref}".encode()).hexdigest()


def assign_splits(
    records: list[DatasetRecord], seed: int = 0, ratios: tuple[float, float, float] = SPLIT_RATIOS
) -> list[DatasetRecord]:
    """Deterministic 7:2:1 split, exact up to rounding, keyed by record hash."""
    n = len(records)
    order = sorted(range(n), key=lambda i: _split_hash(seed, records[i].series_ref))
    n_train = math.floor(ratios[0] * n)
    n_val = math.floor(ratios[1] * n)
    out = list(records)
    for pos, idx in enumerate(order):
        if pos < n_train:
            split = Split.TRAIN
        elif pos < n_train + n_val:
            split = Split.VAL
        else:
            split = Split.TEST
        out[idx] = replace(records[idx], split=split)
    return out


def generate_corpus(
    n: int,
    seed: int = 0,
    regime_weights: tuple[float, float, float] = (0.6, 0.3, 0.1),
    length: int = DEFAULT_LENGTH,
    compute_complexity: bool = True,
) -> list[DatasetRecord]:
    """Seeded corpus with regime mixture; provisional category = regime label."""
    rng = np.random.default_rng(seed)
    regimes = [Category.STEADY, Category.TRANSITIONAL, Category.VOLATILE]
    records = []
    for i in range(n):
        regime = regimes[rng.choice(3, p=regime_weights)]
        spec = SyntheticSpec(seed=int(rng.integers(0, 2**31 - 1)), regime=regime, length=length)
        series = generate_synthetic(spec)
        series = replace(series, station_id=f"syn-{regime.value}-{i:06d}-s{seed}")
        d = complexity_index(series).d_index if compute_complexity else 0.0
        records.append(
            DatasetRecord(
                series=series, captions=(), complexity=d, category=regime, split=Split.TRAIN
            )
        )
    return assign_splits(records, seed=seed)


def regime_label(record: DatasetRecord) -> Category | None:
    """Ground-truth generator regime recovered from the synthetic station id."""
    m = re.match(r"syn-(steady|transitional|volatile)-", record.series_ref)
    return Category(m.group(1)) if m else None


def recalibrate_corpus(
    records: list[DatasetRecord], targets=(0.60, 0.30, 0.10)
) -> tuple[list[DatasetRecord], CategoryThresholds]:
    """Fit thresholds on the training split and re-categorize every record."""
    train_d = [r.complexity for r in records if r.split is Split.TRAIN]
    thresholds = calibrate_thresholds(train_d, targets)
    out = [replace(r, category=categorize(r.complexity, thresholds)) for r in records]
    return out, thresholds


# ---------------------------------------------------------------------------
# serialization


def _series_to_json(series: TimeSeries) -> dict:
    return {
        "station_id": series.station_id,
        "start_time": series.start_time.isoformat(),
        "step_seconds": int(series.step.total_seconds()),
        "climate_zone": series.climate_zone.value,
        "channels": list(CHANNELS),
        "values": series.values.tolist(),
    }


def _series_from_json(obj: dict) -> TimeSeries:
    channels = obj.get("channels", list(CHANNELS))
    if tuple(channels) != CHANNELS:
        raise DatasetFormatError(f"unexpected channel layout {channels}")
    return TimeSeries(
        values=np.asarray(obj["values"], dtype=np.float64),
        start_time=datetime.fromisoformat(obj["start_time"]),
        step=timedelta(seconds=obj["step_seconds"]),
        station_id=obj["station_id"],
        climate_zone=ClimateZone(obj.get("climate_zone", "unknown")),
    )


def _caption_to_json(c: CaptionRecord) -> dict:
    return {
        "series_ref": c.series_ref,
        "text": c.text,
        "generator_role": c.generator_role.value,
        "backend_id": c.backend_id,
        "reflector_status": c.reflector_status.value,
        "reflector_feedback": c.reflector_feedback,
        "refine_round": c.refine_round,
        "utility_score": c.utility_score,
        "reviewer_decision": c.reviewer_decision.value,
        "s_pa": c.s_pa,
        "s_sr": c.s_sr,
    }


def _caption_from_json(obj: dict, series_ref: str) -> CaptionRecord:
    return CaptionRecord(
        series_ref=obj.get("series_ref", series_ref),
        text=obj["text"],
        generator_role=obj["generator_role"],
        backend_id=obj["backend_id"],
        reflector_status=obj["reflector_status"],
        reflector_feedback=obj.get("reflector_feedback", ""),
        refine_round=int(obj.get("refine_round", 0)),
        utility_score=float(obj.get("utility_score", 0.0)),
        reviewer_decision=obj.get("reviewer_decision", "none"),
        s_pa=obj.get("s_pa"),
        s_sr=obj.get("s_sr"),
    )


def record_to_json(record: DatasetRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "series": _series_to_json(record.series),
        "captions": [_caption_to_json(c) for c in record.captions],
        "complexity": record.complexity,
        "category": record.category.value,
        "split": record.split.value,
    }


def record_from_json(obj: dict) -> DatasetRecord:
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DatasetFormatError(f"unsupported schema_version {version!r}")
    series = _series_from_json(obj["series"])
    captions = tuple(_caption_from_json(c, series.station_id) for c in obj.get("captions", []))
    return DatasetRecord(
        series=series,
        captions=captions,
        complexity=float(obj["complexity"]),
        category=obj["category"],
        split=obj["split"],
    )


def save_dataset(path: str | Path, records: list[DatasetRecord]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record)) + "\n")
    tmp.replace(path)


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(record_from_json(obj))
            except DatasetFormatError as exc:
                raise DatasetFormatError(f"line {lineno}: {exc}") from None
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise DatasetFormatError(f"line {lineno}: {exc}") from None
    return records


# ---------------------------------------------------------------------------
# corpus statistics

_WORD_RE = re.compile(r"[a-z0-9']+")
_SENTENCE_RE = re.compile(r"[.!?]+")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def count_syllables(word: str) -> int:
    return max(1, len(_VOWEL_GROUP_RE.findall(word.lower())))


def flesch_kincaid_grade(text: str) -> float:
    """0.39 * words/sentences + 11.8 * syllables/words - 15.59."""
    words = tokenize(text)
    if not words:
        return 0.0
    sentences = max(1, len([s for s in _SENTENCE_RE.split(text) if s.strip()]))
    syllables = sum(count_syllables(w) for w in words)
    return 0.39 * len(words) / sentences + 11.8 * syllables / len(words) - 15.59


@dataclass(frozen=True)
class CorpusStats:
    n_records: int
    n_observations: int
    n_unique_captions: int
    mean_caption_words: float
    vocabulary_size: int
    category_proportions: dict[str, float]
    steady_mean_acf24: float | None
    qc_pass_rate: float | None
    mean_caption_series_cosine: float | None
    mean_fk_grade: float | None

    def as_table(self) -> str:
        rows = [
            ("Records", f"{self.n_records}"),
            ("Observation points", f"{self.n_observations}"),
            ("Unique captions", f"{self.n_unique_captions}"),
            ("Average caption length", f"{self.mean_caption_words:.1f} words"),
            ("Vocabulary size", f"{self.vocabulary_size}"),
            (
                "Steady / Transitional / Volatile",
                " / ".join(
                    f"{100 * self.category_proportions.get(c.value, 0.0):.1f}%"
                    for c in (Category.STEADY, Category.TRANSITIONAL, Category.VOLATILE)
                ),
            ),
            (
                "Steady mean 24h autocorrelation",
                "n/a" if self.steady_mean_acf24 is None else f"{self.steady_mean_acf24:.3f}",
            ),
            ("Human QC pass rate", "n/a" if self.qc_pass_rate is None else f"{self.qc_pass_rate:.1f}%"),
            (
                "Avg. caption-series cosine",
                "n/a"
                if self.mean_caption_series_cosine is None
                else f"{self.mean_caption_series_cosine:.3f}",
            ),
            ("Mean Flesch-Kincaid grade", "n/a" if self.mean_fk_grade is None else f"{self.mean_fk_grade:.1f}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def corpus_stats(records: list[DatasetRecord]) -> CorpusStats:
    if not records:
        raise InputValidationError("corpus_stats needs a nonempty corpus")
    from .core import ReviewerDecision
    from .embedding import cosine, encode_series, encode_text

    captions = []
    for r in records:
        accepted = r.accepted_caption
        if accepted is not None:
            captions.append((r, accepted))
        else:
            captions.extend((r, c) for c in r.captions)

    texts = [c.text for _, c in captions]
    words_per = [len(tokenize(t)) for t in texts]
    vocab = set()
    for t in texts:
        vocab.update(tokenize(t))

    cats = {c.value: 0 for c in Category}
    for r in records:
        cats[r.category.value] += 1
    proportions = {k: v / len(records) for k, v in cats.items()}

    steady_acf = []
    for r in records:
        if r.category is Category.STEADY and r.series.length > 24:
            steady_acf.append(autocorrelation(r.series.channel("temperature"), 24))

    decided = approved = 0
    for r in records:
        for c in r.captions:
            if c.reviewer_decision is not ReviewerDecision.NONE:
                decided += 1
                if c.reviewer_decision in (ReviewerDecision.APPROVE, ReviewerDecision.EDIT):
                    approved += 1

    cosines = [
        cosine(encode_series(r.series), encode_text(c.text)) for r, c in captions if c.text.strip()
    ]

    return CorpusStats(
        n_records=len(records),
        n_observations=sum(r.series.values.size for r in records),
        n_unique_captions=len(set(texts)),
        mean_caption_words=float(np.mean(words_per)) if words_per else 0.0,
        vocabulary_size=len(vocab),
        category_proportions=proportions,
        steady_mean_acf24=float(np.mean(steady_acf)) if steady_acf else None,
        qc_pass_rate=100.0 * approved / decided if decided else None,
        mean_caption_series_cosine=float(np.mean(cosines)) if cosines else None,
        mean_fk_grade=float(np.mean([flesch_kincaid_grade(t) for t in texts])) if texts else None,
    )


# ---------------------------------------------------------------------------
# CSV import

MAX_GAP_STEPS = 3


def import_csv(path: str | Path, step: timedelta = timedelta(hours=1)) -> list[TimeSeries]:
    """Read station CSV (timestamp + 5 channel columns) into regular series.

    Interior gaps of at most MAX_GAP_STEPS grid steps are linearly
    interpolated per channel; longer gaps split the series.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetFormatError("CSV file has no header row")
        header = [h.strip().lower() for h in reader.fieldnames]
        if header[0] not in ("timestamp", "time", "datetime"):
            raise DatasetFormatError("first CSV column must be the timestamp")
        missing = [c for c in CHANNELS if c not in header]
        if missing:
            raise DatasetFormatError(f"CSV missing channel columns: {missing}")
        ts_key = reader.fieldnames[0]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row[ts_key].strip())
            except ValueError as exc:
                raise DatasetFormatError(f"line {lineno}: bad timestamp ({exc})") from None
            if ts.tzinfo is None:
                ts = ts.replace(tzinfo=timezone.utc)
            vals = []
            for c in CHANNELS:
                raw = (row.get(c) or "").strip()
                vals.append(float(raw) if raw else np.nan)
            rows.append((ts, vals))
    if not rows:
        return []
    rows.sort(key=lambda r: r[0])

    start = rows[0][0]
    step_s = step.total_seconds()
    n_grid = int(round((rows[-1][0] - start).total_seconds() / step_s)) + 1
    grid = np.full((n_grid, N_CHANNELS), np.nan)
    for ts, vals in rows:
        offset = (ts - start).total_seconds() / step_s
        idx = int(round(offset))
        if abs(offset - idx) > 1e-6:
            raise DatasetFormatError(f"timestamp {ts.isoformat()} is off the {step} grid")
        grid[idx] = vals

    gappy = np.any(np.isnan(grid), axis=1)
    segments = []
    seg_start = 0
    i = 0
    while i < n_grid:
        if gappy[i]:
            run_start = i
            while i < n_grid and gappy[i]:
                i += 1
            run_len = i - run_start
            interior = run_start > seg_start and i < n_grid
            if run_len > MAX_GAP_STEPS or not interior:
                if run_start - seg_start >= 2:
                    segments.append((seg_start, run_start))
                seg_start = i
        else:
            i += 1
    if n_grid - seg_start >= 2:
        segments.append((seg_start, n_grid))

    station = path.stem
    out = []
    for lo, hi in segments:
        block = grid[lo:hi].copy()
        for c in range(N_CHANNELS):
            col = block[:, c]
            nans = np.isnan(col)
            if nans.any():
                idxs = np.arange(col.shape[0])
                col[nans] = np.interp(idxs[nans], idxs[~nans], col[~nans])
        seg_start_time = start + timedelta(seconds=lo * step_s)
        out.append(
            TimeSeries(
                values=block,
                start_time=seg_start_time,
                step=step,
                station_id=f"{station}-{seg_start_time.strftime('%Y%m%d%H')}",
            )
        )
    return out


def window_series(series: TimeSeries, length: int = 168, stride: int = 24) -> list[TimeSeries]:
    """Fixed-length windows with the station id suffixed by window start."""
    windows = []
    for lo in range(0, series.length - length + 1, stride):
        values = series.values[lo : lo + length]
        windows.append(
            TimeSeries(
                values=values,
                start_time=series.start_time + lo * series.step,
                step=series.step,
                station_id=f"{series.station_id}-w{lo:05d}",
                climate_zone=series.climate_zone,
            )
        )
    return windows
