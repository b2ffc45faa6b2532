"""Phase prompt builders.

Each phase prompt carries a recognizable phase marker plus a machine-readable
``FACTS: {...}`` line derived from local analytics, which both live backends
and the deterministic mock consume.
"""

from __future__ import annotations

import json

from ..core import GeneratorRole, PerceptionVector, TimeSeries
from ..spectral import TREND_SIGNIFICANCE
from .rules import Rule, Tag

PERCEPTION_SYSTEM = """Phase 1: Multi-Tool Reasoning
Role: expert weather-data analyst.
Goal: characterize the input series with the available tools.
Protocol:
1. Write your reasoning inside <think> tags before each action.
2. Invoke one tool per step inside <tool> tags, as `call: Name(arg=value, ...)`.
   Available tools: Trend_Detector(window: int), FFT_Analyzer(top_k: int),
   Anomaly_Seeker(delta: number|auto).
3. When finished, emit <answer> with a short structured feature summary.
Tool observations arrive as messages of the form [System: Tool Output: ...]."""

GROUND_SYSTEM = """Phase 2: Semantic Grounding
Role: senior synoptic meteorologist.
Task: interpret the numeric features using the retrieved climatology rules.
Do not produce the final caption yet.
Output a <reasoning>...</reasoning> block and a <tags>[Facet: Value], ...</tags> line.
Use only tags from the provided matched list."""

_ROLE_STYLE = {
    GeneratorRole.STANDARD_REPORT: "formal station-report wording",
    GeneratorRole.TREND_ANALYSIS: "focus on the dominant trend and what drives it",
    GeneratorRole.CASUAL: "conversational, human forecast wording",
}

REFLECT_SYSTEM = """Phase 4: Reflection and Fact-Checking
Role: strict quality-assurance auditor for weather reports.
Checklist: 1) hallucinated events, 2) trend-direction consistency, 3) extrema timing.
If any check fails output STATUS: REJECT and a <feedback>...</feedback> block;
otherwise output STATUS: PASS."""

JUDGE_SYSTEM = """Caption quality judge.
Score the candidate caption for factual coverage and fluency.
Output a single line: SCORE: <value in [0, 1]>."""


def generation_system(role: GeneratorRole) -> str:
    return (
        f"Phase 3: Caption Generation ({role.value})\n"
        "Role: meteorological caption writer.\n"
        f"Style: {_ROLE_STYLE[role]}.\n"
        "Write one factual caption for the series described by the FACTS line. Mention only "
        "events supported by the facts. Target length about 45 words."
    )


def series_facts(v: PerceptionVector, series: TimeSeries, tags: tuple[Tag, ...] = ()) -> dict:
    if v.trend_p_value < TREND_SIGNIFICANCE and abs(v.trend_slope) > 1e-12:
        direction = "up" if v.trend_slope > 0 else "down"
    else:
        direction = "flat"
    temp = v.channel_stats["temperature"]
    return {
        "direction": direction,
        "slope": round(v.trend_slope, 4),
        "p_value": round(v.trend_p_value, 6),
        "period": round(v.top_peak_period, 2) if v.top_peaks else None,
        "anomaly_count": v.anomaly_count,
        "first_anomaly_t": v.anomaly_indices[0] if v.anomaly_indices else None,
        "peak_t": temp.argmax,
        "trough_t": temp.argmin,
        "temp_mean": round(temp.mean, 2),
        "temp_max": int(round(temp.max)),
        "temp_min": int(round(temp.min)),
        "precip_max": round(v.channel_stats["precipitation"].max, 3),
        "wind_max": round(v.channel_stats["wind"].max, 2),
        "spectral_entropy": round(v.spectral_entropy, 3),
        "tags": [t.render() for t in tags],
    }


def facts_line(facts: dict) -> str:
    return "FACTS: " + json.dumps(facts, sort_keys=True)


def perception_intro(series: TimeSeries) -> str:
    preview = ", ".join(f"{x:.2f}" for x in series.channel("temperature")[:12])
    return (
        f"Input series: station {series.station_id or 'unknown'}, {series.length} hourly steps, "
        f"5 channels. Temperature (K) starts: [{preview}, ...]. Analyze it with the tools."
    )


def grounding_message(facts: dict, matched_rules: list[Rule], tags: list[Tag]) -> str:
    rule_lines = "\n".join(f"- {r.id}: {r.text}" for r in matched_rules) or "- none fired"
    rendered = ", ".join(t.render() for t in tags)
    return (
        f"{facts_line(facts)}\n"
        f"Retrieved rules:\n{rule_lines}\n"
        f"Matched tags: {rendered}"
    )


def generation_message(facts: dict, reasoning: str) -> str:
    msg = facts_line(facts)
    if reasoning:
        msg += f"\nGrounding notes: {reasoning}"
    return msg


def refinement_message(facts: dict, previous: str, feedback: str) -> str:
    return (
        f"{facts_line(facts)}\n"
        f"Previous caption: {previous}\n"
        f"Feedback: {feedback}\n"
        "Rewrite the caption so every flagged issue is fixed."
    )


def reflection_message(facts: dict, caption: str) -> str:
    return f"{facts_line(facts)}\nCandidate caption: {caption}"


def judge_message(facts: dict, caption: str) -> str:
    return f"{facts_line(facts)}\nCandidate caption: {caption}"
