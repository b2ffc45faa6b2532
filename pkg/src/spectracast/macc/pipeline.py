"""The four-phase captioning engine.

Perception runs the agent loop but always executes the tools locally, so the
resulting vector is complete regardless of agent behavior. Grounding matches
rules deterministically and only lets the backend narrow the tag set.
Generation fans out over (backend, role) pairs; reflection is the
deterministic checker with the backend as an advisory second opinion;
selection maximizes the weighted similarity-plus-judge utility.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace

from ..core import (
    CaptionRecord,
    DatasetRecord,
    GeneratorRole,
    InputValidationError,
    PerceptionVector,
    ReflectorStatus,
    SpectracastError,
    TimeSeries,
)
from ..embedding import cosine, encode_series, encode_text
from ..gateway import ChatGateway, ChatMessage, ChatRequest, GatewayError
from ..spectral import detect_trend, fft_spectrum, perceive, seek_anomalies, top_k_peaks
from . import prompts
from .reflector import ReflectorVerdict, reflect_deterministic
from .rules import Rule, Tag, match_rules
from .transcript import ToolCall, TranscriptError, parse_transcript

log = logging.getLogger(__name__)

MAX_PARSE_FAILURES = 3
DEFAULT_MAX_STEPS = 8
DEFAULT_MAX_ROUNDS = 2
DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.5

_TAG_ITEM_RE = re.compile(r"\[\s*([A-Za-z]+)\s*:\s*([A-Za-z0-9_\- ]+?)\s*\]")
_SCORE_RE = re.compile(r"SCORE:\s*([0-9.]+)")
_STATUS_RE = re.compile(r"STATUS:\s*(PASS|REJECT)")


class PipelineError(SpectracastError):
    pass


@dataclass(frozen=True)
class GroundedKnowledge:
    tags: tuple[Tag, ...]
    reasoning: str
    matched_rule_ids: tuple[str, ...]
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class SelectionResult:
    winner: CaptionRecord
    candidates: tuple[CaptionRecord, ...]
    fallback_used: bool


def execute_tool(call: ToolCall, series: TimeSeries) -> str:
    """Run a perception tool locally and render its observation line."""
    x = series.channel("temperature")
    if call.name == "Trend_Detector":
        rep = detect_trend(x, window=int(call.args.get("window", 24)))
        return (
            f"Trend_Detector -> slope={rep.slope:+.3f}, p={rep.p_value:.3g}, "
            f"direction={rep.direction.value}"
        )
    if call.name == "FFT_Analyzer":
        k = int(call.args.get("top_k", 3))
        peaks = top_k_peaks(fft_spectrum(x, detrend=True), k)
        rendered = ", ".join(f"(period={p:.1f}, frac={f:.2f})" for p, f in peaks) or "none"
        return f"FFT_Analyzer -> peaks [{rendered}]"
    if call.name == "Anomaly_Seeker":
        delta = call.args.get("delta", "auto")
        idx = seek_anomalies(x, delta if isinstance(delta, (int, float)) else "auto")
        return f"Anomaly_Seeker -> indices {idx}"
    raise PipelineError(f"no local implementation for tool {call.name!r}")


def run_perception(
    series: TimeSeries,
    gateway: ChatGateway,
    backend_id: str,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> PerceptionVector:
    """Agent tool loop; local tool execution guarantees a complete vector."""
    local = perceive(series)
    if max_steps == 0:
        return replace(local, flags=local.flags + ("agent_skipped",))

    messages: list[ChatMessage] = [
        ChatMessage(role="user", content=prompts.perception_intro(series))
    ]
    parse_failures = 0
    answered = False
    for _ in range(max_steps):
        resp = gateway.complete(
            ChatRequest(
                backend_id=backend_id,
                system=prompts.PERCEPTION_SYSTEM,
                messages=tuple(messages),
                temperature=0.0,
            )
        )
        try:
            transcript = parse_transcript(resp.content)
        except TranscriptError as exc:
            parse_failures += 1
            if parse_failures >= MAX_PARSE_FAILURES:
                raise PipelineError(
                    f"agent produced {parse_failures} unparseable transcripts: {exc}"
                ) from exc
            messages.append(ChatMessage(role="assistant", content=resp.content))
            messages.append(
                ChatMessage(role="user", content=f"[System: parse error: {exc}. Follow the protocol.]")
            )
            continue
        messages.append(ChatMessage(role="assistant", content=resp.content))
        if transcript.answer is not None:
            answered = True
            break
        observations = [execute_tool(call, series) for call in transcript.tool_calls]
        if not observations:
            messages.append(
                ChatMessage(role="user", content="[System: no tool call found; call a tool or answer.]")
            )
            continue
        for obs in observations:
            messages.append(ChatMessage(role="user", content=f"[System: Tool Output: {obs}]"))
    if not answered:
        raise PipelineError(f"agent did not answer within {max_steps} steps")
    return local


def ground(
    v: PerceptionVector,
    kb: list[Rule],
    gateway: ChatGateway | None = None,
    backend_id: str | None = None,
    series: TimeSeries | None = None,
) -> GroundedKnowledge:
    """Deterministic rule match, optionally narrowed by the backend's tags."""
    matched, tags = match_rules(v, kb)
    matched_ids = tuple(r.id for r in matched)
    facts = prompts.series_facts(v, series) if series is not None else _facts_no_series(v)

    if gateway is None or backend_id is None:
        return GroundedKnowledge(
            tags=tuple(tags), reasoning="", matched_rule_ids=matched_ids, flags=("no_backend",)
        )
    try:
        resp = gateway.complete(
            ChatRequest(
                backend_id=backend_id,
                system=prompts.GROUND_SYSTEM,
                messages=(
                    ChatMessage(role="user", content=prompts.grounding_message(facts, matched, tags)),
                ),
                temperature=0.0,
            )
        )
    except GatewayError as exc:
        log.warning("grounding backend failed, using deterministic tags: %s", exc)
        return GroundedKnowledge(
            tags=tuple(tags), reasoning="", matched_rule_ids=matched_ids, flags=("backend_failed",)
        )
    reasoning = ""
    m = re.search(r"<reasoning>(.*?)</reasoning>", resp.content, re.DOTALL)
    if m:
        reasoning = m.group(1).strip()
    tag_block = re.search(r"<tags>(.*?)</tags>", resp.content, re.DOTALL)
    returned: list[Tag] = []
    if tag_block:
        for facet, value in _TAG_ITEM_RE.findall(tag_block.group(1)):
            try:
                returned.append(Tag(facet=facet.lower(), value=value.strip()))
            except (ValueError, InputValidationError):
                returned = []
                break
    allowed = {(t.facet, t.value) for t in tags}
    if returned and all((t.facet, t.value) in allowed for t in returned):
        final = tuple(dict.fromkeys(returned))
        flags: tuple[str, ...] = ()
    else:
        final = tuple(tags)
        flags = ("tags_fallback",)
    return GroundedKnowledge(
        tags=final, reasoning=reasoning, matched_rule_ids=matched_ids, flags=flags
    )


def _facts_no_series(v: PerceptionVector) -> dict:
    temp = v.channel_stats.get("temperature")
    return {
        "direction": "down" if v.trend_slope < 0 else "up" if v.trend_slope > 0 else "flat",
        "slope": round(v.trend_slope, 4),
        "period": round(v.top_peak_period, 2) if v.top_peaks else None,
        "anomaly_count": v.anomaly_count,
        "first_anomaly_t": v.anomaly_indices[0] if v.anomaly_indices else None,
        "peak_t": temp.argmax if temp else None,
        "trough_t": temp.argmin if temp else None,
        "precip_max": round(v.channel_stats["precipitation"].max, 3)
        if "precipitation" in v.channel_stats
        else 0.0,
        "wind_max": round(v.channel_stats["wind"].max, 2) if "wind" in v.channel_stats else 0.0,
        "tags": [],
    }


def generate_candidates(
    knowledge: GroundedKnowledge,
    v: PerceptionVector,
    series: TimeSeries,
    gateway: ChatGateway,
    backends: list[str],
    roles: list[GeneratorRole] | None = None,
) -> list[CaptionRecord]:
    """One candidate per (backend, role) pair; empty completions are dropped."""
    if not backends:
        raise InputValidationError("generate_candidates needs at least one backend")
    roles = roles or [GeneratorRole.STANDARD_REPORT]
    facts = prompts.series_facts(v, series, tags=knowledge.tags)
    message = prompts.generation_message(facts, knowledge.reasoning)
    candidates: list[CaptionRecord] = []
    failures: list[str] = []
    for backend_id in backends:
        for role in roles:
            role = GeneratorRole(role)
            try:
                resp = gateway.complete(
                    ChatRequest(
                        backend_id=backend_id,
                        system=prompts.generation_system(role),
                        messages=(ChatMessage(role="user", content=message),),
                    )
                )
            except GatewayError as exc:
                failures.append(f"{backend_id}/{role.value}: {exc}")
                continue
            text = resp.content.strip()
            if not text:
                continue
            candidates.append(
                CaptionRecord(
                    series_ref=series.station_id,
                    text=text,
                    generator_role=role,
                    backend_id=backend_id,
                )
            )
    if not candidates:
        raise PipelineError(f"all caption backends failed: {failures}")
    return candidates


def reflect(
    candidate: CaptionRecord,
    v: PerceptionVector,
    series: TimeSeries,
    gateway: ChatGateway | None = None,
    backend_id: str | None = None,
) -> ReflectorVerdict:
    """Deterministic checks; the backend's opinion is advisory and logged only."""
    if not candidate.text.strip():
        raise InputValidationError("cannot reflect on an empty caption")
    verdict = reflect_deterministic(candidate.text, v, series)
    if gateway is not None and backend_id is not None:
        facts = prompts.series_facts(v, series)
        try:
            resp = gateway.complete(
                ChatRequest(
                    backend_id=backend_id,
                    system=prompts.REFLECT_SYSTEM,
                    messages=(
                        ChatMessage(
                            role="user",
                            content=prompts.reflection_message(facts, candidate.text),
                        ),
                    ),
                    temperature=0.0,
                )
            )
            m = _STATUS_RE.search(resp.content)
            advisory = m.group(1) if m else "UNPARSED"
            if (advisory == "PASS") != verdict.passed:
                log.info(
                    "advisory reflector disagrees on %r: advisory=%s deterministic=%s",
                    candidate.text[:60],
                    advisory,
                    verdict.status,
                )
        except GatewayError as exc:
            log.warning("advisory reflector failed: %s", exc)
    return verdict


def refine_loop(
    candidates: list[CaptionRecord],
    v: PerceptionVector,
    series: TimeSeries,
    gateway: ChatGateway,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    knowledge: GroundedKnowledge | None = None,
) -> list[CaptionRecord]:
    """Re-prompt rejected candidates with feedback until pass or budget."""
    if max_rounds < 0:
        raise InputValidationError("max_rounds must be >= 0")
    tags = knowledge.tags if knowledge else ()
    facts = prompts.series_facts(v, series, tags=tuple(tags))
    out: list[CaptionRecord] = []
    for cand in candidates:
        current = cand
        verdict = reflect(current, v, series)
        rounds = 0
        while not verdict.passed and rounds < max_rounds:
            rounds += 1
            try:
                resp = gateway.complete(
                    ChatRequest(
                        backend_id=current.backend_id,
                        system=prompts.generation_system(current.generator_role),
                        messages=(
                            ChatMessage(
                                role="user",
                                content=prompts.refinement_message(
                                    facts, current.text, verdict.feedback
                                ),
                            ),
                        ),
                    )
                )
            except GatewayError as exc:
                log.warning("refinement backend failed for %s: %s", current.backend_id, exc)
                break
            new_text = resp.content.strip()
            if not new_text:
                break
            current = replace(current, text=new_text, refine_round=rounds)
            verdict = reflect(current, v, series)
        current = replace(
            current,
            reflector_status=ReflectorStatus.PASS if verdict.passed else ReflectorStatus.REJECT,
            reflector_feedback=verdict.feedback,
        )
        out.append(current)
    return out


def judge_score(
    caption: str,
    facts: dict,
    gateway: ChatGateway | None,
    judge_backend: str | None,
) -> float:
    """Rubric score in [0, 1]; falls back to the local heuristic off-backend."""
    from ..gateway import judge_heuristic

    if gateway is None or judge_backend is None:
        return judge_heuristic(caption, facts)
    resp = gateway.complete(
        ChatRequest(
            backend_id=judge_backend,
            system=prompts.JUDGE_SYSTEM,
            messages=(ChatMessage(role="user", content=prompts.judge_message(facts, caption)),),
            temperature=0.0,
        )
    )
    m = _SCORE_RE.search(resp.content)
    if not m:
        log.warning("judge output unparseable, using heuristic: %r", resp.content[:80])
        return judge_heuristic(caption, facts)
    return float(min(1.0, max(0.0, float(m.group(1)))))


def select_caption(
    candidates: list[CaptionRecord],
    series: TimeSeries,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    gateway: ChatGateway | None = None,
    judge_backend: str | None = None,
    v: PerceptionVector | None = None,
) -> SelectionResult:
    """argmax of alpha * cos(series, text) + beta * judge over pass candidates."""
    if not candidates:
        raise InputValidationError("select_caption needs at least one candidate")
    v = v or perceive(series)
    facts = prompts.series_facts(v, series)
    series_vec = encode_series(series)
    scored: list[CaptionRecord] = []
    for cand in candidates:
        sim = cosine(series_vec, encode_text(cand.text))
        judge = judge_score(cand.text, facts, gateway, judge_backend) if beta != 0 else 0.0
        scored.append(replace(cand, utility_score=alpha * sim + beta * judge))
    pool = [c for c in scored if c.reflector_status is ReflectorStatus.PASS]
    fallback = not pool
    if fallback:
        log.warning("no pass-status candidates; selecting over all %d", len(scored))
        pool = scored
    winner = max(pool, key=lambda c: c.utility_score)  # max keeps the earliest on ties
    return SelectionResult(winner=winner, candidates=tuple(scored), fallback_used=fallback)


def caption_record(
    record: DatasetRecord,
    gateway: ChatGateway,
    backends: list[str],
    roles: list[GeneratorRole] | None = None,
    kb: list[Rule] | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    judge_backend: str | None = None,
    agent_backend: str | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> DatasetRecord:
    """Full MACC pass over one record; returns it with captions attached."""
    from .rules import default_rules

    kb = kb or default_rules()
    series = record.series
    v = run_perception(series, gateway, agent_backend or backends[0], max_steps=max_steps)
    knowledge = ground(v, kb, gateway, agent_backend or backends[0], series=series)
    candidates = generate_candidates(knowledge, v, series, gateway, backends, roles)
    candidates = refine_loop(candidates, v, series, gateway, max_rounds, knowledge)
    selection = select_caption(
        candidates, series, alpha, beta, gateway, judge_backend or backends[0], v=v
    )
    return replace(record, captions=selection.candidates)
