"""Deterministic fact-checking of caption candidates.

Three lexicon-driven checks against the measured series: event hallucination
(claimed weather the channels do not support), trend-direction consistency,
and extrema timing. Keywords are negation-aware within a three-token window,
so "no rain" never triggers the rain predicate.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources

from ..core import PerceptionVector, TimeSeries
from ..corpus import tokenize
from ..spectral import TrendDirection, detect_trend

WIND_EVENT_THRESHOLD = 8.0  # m/s: below this, wind-event words count as hallucination
EXTREMA_TOLERANCE = 3  # samples
NEGATION_WINDOW = 3  # tokens


class CheckName(str, Enum):
    HALLUCINATION = "hallucination"
    TREND_CONSISTENCY = "trend_consistency"
    EXTREMA_ACCURACY = "extrema_accuracy"


@dataclass(frozen=True)
class ReflectorVerdict:
    status: str  # pass | reject
    checks: dict[CheckName, bool]
    feedback: str

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@lru_cache(maxsize=1)
def load_lexicon() -> dict[str, tuple[str, ...]]:
    raw = resources.files("spectracast.macc").joinpath("data/lexicon.json").read_text()
    return {k: tuple(v) for k, v in json.loads(raw).items()}


def _negated(tokens: list[str], idx: int, negations: tuple[str, ...]) -> bool:
    lo = max(0, idx - NEGATION_WINDOW)
    return any(t in negations for t in tokens[lo:idx])


def claimed_keywords(text: str, lexicon_key: str) -> list[str]:
    """Non-negated occurrences of the lexicon class in the caption."""
    lex = load_lexicon()
    words = set(lex[lexicon_key])
    negations = lex["negations"]
    tokens = tokenize(text)
    return [t for i, t in enumerate(tokens) if t in words and not _negated(tokens, i, negations)]


def check_hallucination(text: str, series: TimeSeries) -> tuple[bool, str]:
    precip_max = float(series.channel("precipitation").max())
    wind_max = float(series.channel("wind").max())
    problems = []
    rain_claims = claimed_keywords(text, "precipitation")
    if rain_claims and precip_max <= 0.0:
        problems.append(
            f"caption claims precipitation ({', '.join(sorted(set(rain_claims)))}) but the "
            "precipitation channel is zero throughout"
        )
    wind_claims = claimed_keywords(text, "wind")
    if wind_claims and wind_max <= WIND_EVENT_THRESHOLD:
        problems.append(
            f"caption claims strong wind ({', '.join(sorted(set(wind_claims)))}) but peak wind "
            f"is {wind_max:.1f} m/s"
        )
    storm_claims = claimed_keywords(text, "storm")
    if storm_claims and precip_max <= 0.0 and wind_max <= WIND_EVENT_THRESHOLD:
        problems.append("caption claims a storm but neither precipitation nor strong wind occurred")
    if problems:
        return False, "Hallucination detected: " + "; ".join(problems) + "."
    return True, ""


def check_trend_consistency(text: str, series: TimeSeries) -> tuple[bool, str]:
    report = detect_trend(series.channel("temperature"))
    claims = set()
    if claimed_keywords(text, "trend_up"):
        claims.add(TrendDirection.UP)
    if claimed_keywords(text, "trend_down"):
        claims.add(TrendDirection.DOWN)
    wrong = {c for c in claims if c is not report.direction}
    if wrong:
        described = " and ".join(sorted(c.value for c in wrong))
        return False, (
            f"Trend mismatch: caption describes {described} temperatures but the measured "
            f"trend is {report.direction.value} (slope {report.slope:+.3f}, p={report.p_value:.3g})."
        )
    return True, ""


_T_INDEX_RE = re.compile(r"\bat\s+t\s*=\s*(\d+)", re.IGNORECASE)
_CLOCK_RE = re.compile(r"\bat\s+(\d{1,2}):00\b")


def _context_window(text: str, span: tuple[int, int], width: int = 40) -> str:
    """Text immediately before the time reference; extremum words precede it."""
    return text[max(0, span[0] - width) : span[1]].lower()


def check_extrema_accuracy(text: str, series: TimeSeries) -> tuple[bool, str]:
    x = series.channel("temperature")
    argmax = int(x.argmax())
    argmin = int(x.argmin())
    lex = load_lexicon()
    problems = []

    def classify(context: str) -> str:
        if any(w in context for w in lex["trough_words"]):
            return "min"
        if any(w in context for w in lex["peak_words"]):
            return "max"
        return "either"

    for m in _T_INDEX_RE.finditer(text):
        stated = int(m.group(1))
        kind = classify(_context_window(text, m.span()))
        ok_max = abs(stated - argmax) <= EXTREMA_TOLERANCE
        ok_min = abs(stated - argmin) <= EXTREMA_TOLERANCE
        ok = ok_max if kind == "max" else ok_min if kind == "min" else (ok_max or ok_min)
        if not ok:
            target = argmax if kind != "min" else argmin
            problems.append(
                f"caption places an extremum at t={stated} but the measured one is at t={target}"
            )

    start_hour = series.start_time.hour
    for m in _CLOCK_RE.finditer(text):
        stated_hour = int(m.group(1)) % 24
        kind = classify(_context_window(text, m.span()))
        targets = {"max": [argmax], "min": [argmin], "either": [argmax, argmin]}[kind]
        def hour_dist(idx: int) -> int:
            actual = (start_hour + idx) % 24
            d = abs(actual - stated_hour)
            return min(d, 24 - d)
        if min(hour_dist(i) for i in targets) > EXTREMA_TOLERANCE:
            problems.append(f"caption places an extremum at {stated_hour}:00 but none occurs then")

    if problems:
        return False, "Extrema mismatch: " + "; ".join(problems) + "."
    return True, ""


def reflect_deterministic(
    text: str, v: PerceptionVector, series: TimeSeries
) -> ReflectorVerdict:
    """Run the three checks; reject iff any fails, with nonempty feedback."""
    results: dict[CheckName, bool] = {}
    notes = []
    for name, check in (
        (CheckName.HALLUCINATION, check_hallucination),
        (CheckName.TREND_CONSISTENCY, check_trend_consistency),
        (CheckName.EXTREMA_ACCURACY, check_extrema_accuracy),
    ):
        ok, note = check(text, series)
        results[name] = ok
        if note:
            notes.append(note)
    if all(results.values()):
        return ReflectorVerdict(status="pass", checks=results, feedback="")
    return ReflectorVerdict(status="reject", checks=results, feedback=" ".join(notes))
