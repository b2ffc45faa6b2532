"""Metrics and experiment protocols at desk scale.

WAPE/MSE, MRR@10 over generated-vs-pool rankings, bi-directional retrieval,
attribute alignment accuracy (trend / period / volatility probes), Welch PSD
comparison, and the augmentation study with a closed-form ridge forecaster.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import signal as sp_signal

from .core import (
    DatasetRecord,
    InputValidationError,
    Split,
    TimeSeries,
)
from .embedding import (
    EmbeddingVector,
    cosine,
    encode_caption_tokens,
    encode_series,
    encode_series_tokens,
    encode_text,
)
from .spectral import TrendDirection, detect_trend, fft_spectrum, top_k_peaks

log = logging.getLogger(__name__)

AAA_TREND_P = 0.05
AAA_PERIOD_TOL = 2.0
AAA_VARIANCE_RATIO = 1.5


def wape(y, y_hat) -> float:
    """Sum |y - y_hat| / sum |y|."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise InputValidationError("wape needs equal-shape arrays")
    denom = float(np.abs(y).sum())
    if denom == 0:
        raise InputValidationError("wape undefined: sum |y| is zero")
    return float(np.abs(y - y_hat).sum() / denom)


def mse(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise InputValidationError("mse needs equal-shape arrays")
    return float(np.mean((y - y_hat) ** 2))


# ---------------------------------------------------------------------------
# MRR@10


def reciprocal_rank(sims: np.ndarray, true_index: int, cutoff: int = 10) -> float:
    """RR of the true item under descending similarity; stable order on ties."""
    order = np.argsort(-sims, kind="stable")
    rank = int(np.flatnonzero(order == true_index)[0]) + 1
    return 1.0 / rank if rank <= cutoff else 0.0


def mrr_at_10(
    queries: list[str],
    truth: list[TimeSeries],
    candidate_pools: list[list[TimeSeries]],
    generator,
    seed: int = 0,
) -> float:
    """Generate a series per caption and rank each pool by embedding cosine.

    `generator` is any callable (caption, seed) -> TimeSeries. Each pool must
    contain the true series exactly once.
    """
    if not (len(queries) == len(truth) == len(candidate_pools)):
        raise InputValidationError("queries, truth, and pools must align")
    rrs = []
    for i, (caption, true_series, pool) in enumerate(zip(queries, truth, candidate_pools)):
        matches = [j for j, cand in enumerate(pool) if cand is true_series]
        if len(matches) != 1:
            raise InputValidationError(f"pool {i} must contain the true series exactly once")
        generated = generator(caption, seed + i)
        gvec = encode_series(generated)
        sims = np.array([cosine(gvec, encode_series(cand)) for cand in pool])
        rrs.append(reciprocal_rank(sims, matches[0]))
    return float(np.mean(rrs))


# ---------------------------------------------------------------------------
# bi-directional retrieval


@dataclass(frozen=True)
class RetrievalReport:
    text_to_series: dict[str, float]
    series_to_text: dict[str, float]

    def as_table(self) -> str:
        ks = sorted(k for k in self.text_to_series if k.startswith("R@"))
        header = "direction        " + "  ".join(f"{k:>6}" for k in ks) + "     MRR"
        rows = [header]
        for name, metrics in (
            ("text->series", self.text_to_series),
            ("series->text", self.series_to_text),
        ):
            cells = "  ".join(f"{100 * metrics[k]:5.1f}%" for k in ks)
            rows.append(f"{name:<16} {cells}  {metrics['MRR']:.4f}")
        return "\n".join(rows)


def _rank_metrics(sim: np.ndarray, k_values: tuple[int, ...]) -> dict[str, float]:
    n = sim.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    for i in range(n):
        order = np.argsort(-sim[i], kind="stable")
        ranks[i] = int(np.flatnonzero(order == i)[0]) + 1
    out = {f"R@{k}": float(np.mean(ranks <= k)) for k in k_values}
    out["MRR"] = float(np.mean(1.0 / ranks))
    return out


def retrieval_eval(
    series_vecs: np.ndarray,
    text_vecs: np.ndarray,
    k_values: tuple[int, ...] = (1, 5),
) -> RetrievalReport:
    """Recall@k / MRR both directions for aligned embedding matrices.

    Row i of each matrix is pair i; matching is identity. Recall@k is
    monotone in k by construction.
    """
    series_vecs = np.asarray(series_vecs, dtype=np.float64)
    text_vecs = np.asarray(text_vecs, dtype=np.float64)
    if series_vecs.shape != text_vecs.shape or series_vecs.ndim != 2:
        raise InputValidationError("embedding matrices must be 2-D with equal shapes")
    if series_vecs.shape[0] < 10:
        raise InputValidationError("retrieval needs at least 10 pairs")

    def _normalize(m):
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise InputValidationError("zero embedding vector in retrieval input")
        return m / norms

    s = _normalize(series_vecs)
    t = _normalize(text_vecs)
    sim = t @ s.T  # rows: text queries over series candidates
    return RetrievalReport(
        text_to_series=_rank_metrics(sim, k_values),
        series_to_text=_rank_metrics(sim.T, k_values),
    )


def retrieval_eval_records(
    records: list[DatasetRecord],
    k_values: tuple[int, ...] = (1, 5),
    series_embedder=None,
    text_embedder=None,
) -> RetrievalReport:
    """Retrieval over dataset records using an embedder pair.

    The offline default maps both sides into the hashed token space (the
    series through its canonical analytic summary); a trained-model latent
    embedder can be passed instead.
    """
    refs = [r.series_ref for r in records]
    if len(set(refs)) != len(refs):
        raise InputValidationError("duplicate series identifiers in retrieval corpus")
    series_embedder = series_embedder or encode_series_tokens
    text_embedder = text_embedder or encode_caption_tokens
    captions = []
    for r in records:
        accepted = r.accepted_caption
        if accepted is None:
            raise InputValidationError(f"record {r.series_ref} has no accepted caption")
        captions.append(accepted.text)
    s_mat = np.stack([_vec(series_embedder(r.series)) for r in records])
    t_mat = np.stack([_vec(text_embedder(c)) for c in captions])
    return retrieval_eval(s_mat, t_mat, k_values)


def _vec(v) -> np.ndarray:
    return v.values if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=np.float64)


# ---------------------------------------------------------------------------
# attribute alignment accuracy


class ProbeKind(str, Enum):
    TREND_DIRECTION = "trend_direction"
    PERIOD_PEAK = "period_peak"
    VOLATILITY_LEVEL = "volatility_level"


@dataclass(frozen=True)
class AttributeProbe:
    kind: ProbeKind
    caption: str
    target: float  # sign for trend, period (samples) for peak, ratio for volatility
    tolerance: float = AAA_PERIOD_TOL
    reference_caption: str | None = None  # volatility probes compare against this

    def __post_init__(self):
        object.__setattr__(self, "kind", ProbeKind(self.kind))
        if self.tolerance <= 0:
            raise InputValidationError("probe tolerance must be positive")
        if self.kind is ProbeKind.VOLATILITY_LEVEL and not self.reference_caption:
            raise InputValidationError("volatility probes need a reference caption")


def probe_passes(
    probe: AttributeProbe, series: TimeSeries, reference_series: list[TimeSeries] | None = None
) -> bool:
    x = series.channel("temperature")
    if probe.kind is ProbeKind.TREND_DIRECTION:
        rep = detect_trend(x, significance=AAA_TREND_P)
        wanted = TrendDirection.UP if probe.target > 0 else TrendDirection.DOWN
        return rep.direction is wanted
    if probe.kind is ProbeKind.PERIOD_PEAK:
        peaks = top_k_peaks(fft_spectrum(x, detrend=True), 1)
        if not peaks:
            return False
        return abs(peaks[0][0] - probe.target) <= probe.tolerance
    # volatility: variance ratio against the reference caption's samples
    if not reference_series:
        raise InputValidationError("volatility probe evaluation needs reference samples")
    ref_var = float(np.mean([np.var(s.channel("temperature")) for s in reference_series]))
    if ref_var == 0:
        return False
    return float(np.var(x)) / ref_var >= probe.target


@dataclass(frozen=True)
class AAAReport:
    per_probe: dict[str, float]
    overall: float

    def as_table(self) -> str:
        rows = [f"{name:<32} {score:6.3f}" for name, score in self.per_probe.items()]
        rows.append(f"{'overall AAA':<32} {self.overall:6.3f}")
        return "\n".join(rows)


def aaa_on_samples(
    probe: AttributeProbe,
    samples: list[TimeSeries],
    reference_series: list[TimeSeries] | None = None,
) -> float:
    if not samples:
        raise InputValidationError("attribute alignment needs at least one sample")
    hits = sum(probe_passes(probe, s, reference_series) for s in samples)
    return hits / len(samples)


def attribute_alignment(
    model,
    probes: list[AttributeProbe],
    n_samples: int,
    seed: int = 0,
    sample_steps: int | None = None,
) -> AAAReport:
    """Sample per probe caption and score the measured attributes.

    `model` must expose sample(caption, n_steps=..., seed=...) -> TimeSeries
    and a `trained` flag.
    """
    if n_samples <= 0:
        raise InputValidationError("attribute_alignment needs n_samples >= 1")
    if not getattr(model, "trained", False):
        raise InputValidationError("attribute_alignment needs a trained model")
    per_probe: dict[str, float] = {}
    scores = []
    for p_idx, probe in enumerate(probes):
        samples = [
            model.sample(probe.caption, n_steps=sample_steps, seed=seed + 1000 * p_idx + i)
            for i in range(n_samples)
        ]
        reference = None
        if probe.kind is ProbeKind.VOLATILITY_LEVEL:
            reference = [
                model.sample(
                    probe.reference_caption, n_steps=sample_steps, seed=seed + 500_000 + i
                )
                for i in range(n_samples)
            ]
        score = aaa_on_samples(probe, samples, reference)
        per_probe[f"{probe.kind.value}:{probe.caption[:30]}"] = score
        scores.append(score)
    return AAAReport(per_probe=per_probe, overall=float(np.mean(scores)))


# ---------------------------------------------------------------------------
# PSD comparison


@dataclass(frozen=True)
class PsdReport:
    frequencies: np.ndarray
    mean_log_psd_a: np.ndarray
    mean_log_psd_b: np.ndarray
    distance: float
    flags: tuple[str, ...] = ()


def _series_values(obj) -> np.ndarray:
    if isinstance(obj, TimeSeries):
        return obj.channel("temperature")
    return np.asarray(obj, dtype=np.float64)


def psd_compare(real_set, gen_set, nperseg: int = 64) -> PsdReport:
    """Mean Welch PSD per set; distance = mean |log10 P_a - log10 P_b|."""
    if not len(real_set) or not len(gen_set):
        raise InputValidationError("psd_compare needs nonempty sets")
    flags = []
    if len(real_set) < 2 or len(gen_set) < 2:
        flags.append("high_variance:single_sample_set")

    def mean_log_psd(items):
        psds = []
        freqs = None
        for item in items:
            x = _series_values(item)
            f, p = sp_signal.welch(
                x, nperseg=min(nperseg, x.shape[0]), noverlap=min(nperseg, x.shape[0]) // 2,
                window="hann",
            )
            freqs = f
            psds.append(p)
        return freqs, np.log10(np.maximum(np.mean(psds, axis=0), 1e-20))

    fa, la = mean_log_psd(real_set)
    fb, lb = mean_log_psd(gen_set)
    if fa.shape != fb.shape:
        raise InputValidationError("sets must share sample length for PSD comparison")
    return PsdReport(
        frequencies=fa,
        mean_log_psd_a=la,
        mean_log_psd_b=lb,
        distance=float(np.mean(np.abs(la - lb))),
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# augmentation study with a ridge lag-window forecaster


@dataclass(frozen=True)
class RidgeForecasterConfig:
    window: int = 48
    alpha: float = 1e-3  # per-sample regularization
    channel: str = "temperature"


class RidgeForecaster:
    """Closed-form multi-output ridge on flattened lag windows.

    Both the inputs and the targets are anchored to the window's last value,
    so level shifts in the data cancel; predictions are reconstructed on the
    absolute scale for scoring. The normal equations scale the regularizer by
    the sample count, so duplicating the training set exactly reproduces the
    same solution.
    """

    def __init__(self, config: RidgeForecasterConfig, horizon: int):
        self.config = config
        self.horizon = horizon
        self.weights: np.ndarray | None = None

    def _windows(self, series_list: list[TimeSeries]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        xs, ys, anchors = [], [], []
        w, h = self.config.window, self.horizon
        for s in series_list:
            x = s.channel(self.config.channel)
            for lo in range(0, x.shape[0] - w - h + 1, h):
                window = x[lo : lo + w]
                anchor = window[-1]
                xs.append(window - anchor)
                ys.append(x[lo + w : lo + w + h] - anchor)
                anchors.append(anchor)
        if not xs:
            raise InputValidationError("series too short for the forecaster window + horizon")
        return np.stack(xs), np.stack(ys), np.asarray(anchors)

    def fit(self, series_list: list[TimeSeries]) -> "RidgeForecaster":
        x, y, _ = self._windows(series_list)
        n = x.shape[0]
        x1 = np.c_[x, np.ones(n)]
        gram = x1.T @ x1 + self.config.alpha * n * np.eye(x1.shape[1])
        self.weights = np.linalg.solve(gram, x1.T @ y)
        return self

    def evaluate(self, series_list: list[TimeSeries]) -> float:
        if self.weights is None:
            raise InputValidationError("forecaster is not fitted")
        x, y, anchors = self._windows(series_list)
        pred = np.c_[x, np.ones(x.shape[0])] @ self.weights
        # absolute-scale error: both sides share the anchor, which cancels
        return float(np.mean((pred - y) ** 2))


@dataclass(frozen=True)
class AugmentationReport:
    horizons: tuple[int, ...]
    real_only_mse: dict[int, float]
    augmented_mse: dict[int, float]

    def as_table(self) -> str:
        rows = ["horizon   real-only   +synthetic"]
        for h in self.horizons:
            rows.append(f"{h:>7}   {self.real_only_mse[h]:9.4f}   {self.augmented_mse[h]:10.4f}")
        return "\n".join(rows)


def augmentation_study(
    records: list[DatasetRecord],
    generator,
    real_fraction: float = 0.1,
    horizons: tuple[int, ...] = (24, 48),
    forecaster_config: RidgeForecasterConfig | None = None,
    seed: int = 0,
    generator_train_refs: set[str] | None = None,
) -> AugmentationReport:
    """Ridge forecaster on (a) a real subset vs (b) the subset + equal-size
    synthetic data, evaluated on the held-out test split.

    `generator` is a callable (caption, seed) -> TimeSeries. When the refs the
    generator was trained on are supplied, any overlap with the test split is
    a leakage error.
    """
    if not 0 < real_fraction <= 1:
        raise InputValidationError("real_fraction must lie in (0, 1]")
    config = forecaster_config or RidgeForecasterConfig()
    train = [r for r in records if r.split is Split.TRAIN]
    test = [r for r in records if r.split is Split.TEST]
    if not train or not test:
        raise InputValidationError("augmentation study needs train and test splits")
    if generator_train_refs is not None:
        leaked = generator_train_refs & {r.series_ref for r in test}
        if leaked:
            raise InputValidationError(f"leakage guard: test refs in generator training: {leaked}")

    rng = np.random.default_rng(seed)
    n_real = max(1, int(round(real_fraction * len(train))))
    chosen = list(rng.choice(len(train), size=n_real, replace=False))
    real_subset = [train[i] for i in chosen]
    real_series = [r.series for r in real_subset]
    test_series = [r.series for r in test]

    synthetic = []
    for i, record in enumerate(real_subset):
        caption = record.accepted_caption.text if record.accepted_caption else ""
        synthetic.append(generator(caption, seed + i))

    report_a: dict[int, float] = {}
    report_b: dict[int, float] = {}
    for h in horizons:
        a = RidgeForecaster(config, h).fit(real_series)
        report_a[h] = a.evaluate(test_series)
        b = RidgeForecaster(config, h).fit(real_series + synthetic)
        report_b[h] = b.evaluate(test_series)
    return AugmentationReport(
        horizons=tuple(horizons), real_only_mse=report_a, augmented_mse=report_b
    )
