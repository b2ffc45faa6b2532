"""Series and text encoders for caption utility scoring and retrieval.

Both offline encoders are deterministic and need no network access: the
series side is a z-scored analytic feature vector; the text side is a signed
hashed bag-of-tokens. ``describe_series`` renders the analytic facts as a
canonical keyword summary so both modalities can meet in the hashed token
space for cross-modal retrieval.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import CHANNELS, InputValidationError, TimeSeries
from .spectral import TrendDirection, detect_trend, perceive

D_EMB = 64


class EmbeddingSource(str, Enum):
    SERIES = "series"
    TEXT = "text"


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    source: EmbeddingSource

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InputValidationError("embedding contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


# fixed (center, scale) pairs used to z-score the analytic features; chosen for
# the synthetic corpus ranges and frozen so embeddings are stable across runs
_FEATURE_NORMS: list[tuple[float, float]] = (
    [
        (0.0, 0.05),  # trend slope
        (0.5, 0.5),  # trend p-value
        (0.01, 0.02),  # anomaly fraction
    ]
    + [(0.5, 0.04)] * 3  # top-3 peak periods as log2(period)/8
    + [(0.3, 0.3)] * 3  # top-3 peak power fractions
    + [
        (0.5, 0.3),  # spectral entropy
        (0.0, 0.5),  # acf lag 24
    ]
    + [
        # per-channel mean, std, min, max
        (288.0, 10.0), (3.0, 3.0), (280.0, 10.0), (296.0, 10.0),  # temperature
        (1013.0, 10.0), (2.0, 2.0), (1005.0, 10.0), (1021.0, 10.0),  # pressure
        (60.0, 15.0), (5.0, 5.0), (40.0, 20.0), (80.0, 20.0),  # humidity
        (4.0, 3.0), (1.0, 1.5), (0.0, 2.0), (8.0, 5.0),  # wind
        (0.05, 0.2), (0.1, 0.3), (0.0, 0.1), (0.5, 1.5),  # precipitation
    ]
)

_FEATURE_CLIP = 4.0


def encode_series(series: TimeSeries, dim: int = D_EMB) -> EmbeddingVector:
    """Deterministic analytic feature vector, z-scored and zero-padded.

    Peak periods enter on a log2 scale so nearby periodicities stay
    distinguishable; absent peaks contribute exactly zero. Every z-scored
    feature is clipped to +-4 so no single outlier dominates the cosine.
    """
    v = perceive(series)
    t_len = series.length
    periods: list[float | None] = [None, None, None]
    powers = [0.0, 0.0, 0.0]
    for i, (freq, frac) in enumerate(v.top_peaks[:3]):
        if freq > 0:
            periods[i] = np.log2(max(1.0 / freq, 1.0)) / 8.0
            powers[i] = frac
    feats: list[float | None] = [v.trend_slope, v.trend_p_value, v.anomaly_count / t_len]
    feats += periods + powers
    feats += [v.spectral_entropy, v.acf_lag24]
    for name in CHANNELS:
        cs = v.channel_stats[name]
        feats += [cs.mean, cs.std, cs.min, cs.max]
    scaled = [
        0.0 if f is None else float(np.clip((f - c) / s, -_FEATURE_CLIP, _FEATURE_CLIP))
        for f, (c, s) in zip(feats, _FEATURE_NORMS)
    ]
    if dim < len(scaled):
        raise InputValidationError(f"series embedding needs dim >= {len(scaled)}")
    out = np.zeros(dim)
    out[: len(scaled)] = scaled
    return EmbeddingVector(values=out, source=EmbeddingSource.SERIES)


def _token_bucket(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.md5(token.encode()).digest()
    bucket = int.from_bytes(digest[:4], "little") % dim
    sign = 1.0 if digest[4] & 1 else -1.0
    return bucket, sign


def _hashed_bow(tokens: list[str], dim: int, weights: dict[str, float] | None = None) -> np.ndarray:
    out = np.zeros(dim)
    for token in tokens:
        bucket, sign = _token_bucket(token, dim)
        w = weights.get(token, 1.0) if weights else 1.0
        out[bucket] += sign * w
    norm = np.linalg.norm(out)
    if norm == 0:  # pathological sign cancellation
        bucket, _ = _token_bucket(tokens[0], dim)
        out[bucket] = 1.0
        norm = 1.0
    return out / norm


def encode_text(text: str, dim: int = D_EMB) -> EmbeddingVector:
    """Signed hashed bag-of-tokens over `dim` buckets, L2-normalized."""
    from .corpus import tokenize

    tokens = tokenize(text)
    if not tokens:
        raise InputValidationError("cannot encode empty text")
    return EmbeddingVector(values=_hashed_bow(tokens, dim), source=EmbeddingSource.TEXT)


def cosine(a: EmbeddingVector | np.ndarray, b: EmbeddingVector | np.ndarray) -> float:
    va = a.values if isinstance(a, EmbeddingVector) else np.asarray(a, dtype=np.float64)
    vb = b.values if isinstance(b, EmbeddingVector) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise InputValidationError(f"embedding dimensions differ: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise InputValidationError("cosine undefined for zero vectors")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def project_embedding(vec: EmbeddingVector, target_dim: int, seed: int = 0) -> EmbeddingVector:
    """Fixed seeded Gaussian random projection for width-mismatched encoders."""
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((target_dim, vec.dim)) / np.sqrt(vec.dim)
    return EmbeddingVector(values=mat @ vec.values, source=vec.source)


def describe_series(series: TimeSeries) -> str:
    """Canonical keyword summary of a series' measured facts.

    The wording deliberately reuses the caption generator's vocabulary
    (direction words, `period N hours`, `t=N` extremum anchors) so that a
    faithful caption and its series share hashed tokens.
    """
    v = perceive(series)
    x = series.channel("temperature")
    trend = detect_trend(x)
    parts = []
    if trend.direction is TrendDirection.UP:
        parts.append("temperatures rising warming trend")
    elif trend.direction is TrendDirection.DOWN:
        parts.append("temperatures falling cooling trend")
    else:
        parts.append("temperatures stable flat")
    parts.append(f"slope {trend.slope:+.2f}")
    if v.top_peaks:
        period = v.top_peak_period
        parts.append(f"dominant period {period:.0f} hours")
    if v.anomaly_count:
        parts.append(f"{v.anomaly_count} abrupt shifts first at t={v.anomaly_indices[0]}")
    else:
        parts.append("no abrupt shifts")
    if v.spectral_entropy > 0.75:
        parts.append("volatile erratic high entropy")
    elif v.spectral_entropy < 0.35:
        parts.append("calm regular low entropy")
    cs = v.channel_stats["temperature"]
    parts.append(f"warmest at t={cs.argmax} coolest at t={cs.argmin}")
    parts.append(
        f"averaging {round(cs.mean)} k, topping {round(cs.max)} k dipping {round(cs.min)} k"
    )
    precip = v.channel_stats["precipitation"]
    if precip.max > 0:
        parts.append(f"rain precipitation peak {precip.max:.1f} mm")
    else:
        parts.append("dry no precipitation")
    wind = v.channel_stats["wind"]
    if wind.max > 8.0:
        parts.append("windy strong gusts")
    return ", ".join(parts)


# function words common to captions and summaries carry no record identity;
# the retrieval-space encoders downweight them so measured facts dominate
_RETRIEVAL_STOPWORDS = {
    w: 0.25
    for w in (
        "a", "an", "and", "at", "by", "conditions", "first", "hour", "hours", "in",
        "is", "k", "near", "no", "of", "out", "per", "report", "station", "t",
        "temperature", "temperatures", "the", "to", "with",
    )
}


def encode_series_tokens(series: TimeSeries, dim: int = D_EMB) -> EmbeddingVector:
    """Series embedding in the hashed token space via its canonical summary."""
    from .corpus import tokenize

    tokens = tokenize(describe_series(series))
    return EmbeddingVector(
        values=_hashed_bow(tokens, dim, _RETRIEVAL_STOPWORDS), source=EmbeddingSource.SERIES
    )


def encode_caption_tokens(text: str, dim: int = D_EMB) -> EmbeddingVector:
    """Caption-side counterpart of encode_series_tokens (same weighting)."""
    from .corpus import tokenize

    tokens = tokenize(text)
    if not tokens:
        raise InputValidationError("cannot encode empty text")
    return EmbeddingVector(
        values=_hashed_bow(tokens, dim, _RETRIEVAL_STOPWORDS), source=EmbeddingSource.TEXT
    )
