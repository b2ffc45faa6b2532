"""Uniform chat-completion client over heterogeneous LLM backends.

Live backends speak the common chat-completions JSON shape over HTTP with
retry/backoff; the mock backend is a pure function of (system, messages,
seed) that understands the captioning pipeline's phase prompts, so the whole
system runs deterministically offline. Credentials are read from environment
variables at call time and never persisted.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import httpx

from .core import InputValidationError, SpectracastError

CRED_ENV_TEMPLATE = "SPECTRACAST_{}_KEY"
DEFAULT_MAX_IN_FLIGHT = 8
MAX_ATTEMPTS = 3


class GatewayError(SpectracastError):
    pass


class UnknownBackendError(GatewayError):
    pass


class DuplicateBackendError(InputValidationError):
    pass


class MissingCredentialError(GatewayError):
    pass


class GatewayTimeout(GatewayError):
    pass


class TransportFailure(GatewayError):
    pass


class MalformedResponseError(GatewayError):
    pass


class Role(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))


@dataclass(frozen=True)
class ChatRequest:
    backend_id: str
    system: str = ""
    messages: tuple[ChatMessage, ...] = ()
    temperature: float = 0.7
    max_tokens: int = 512
    timeout: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.system and not self.messages:
            raise InputValidationError("chat request needs a system prompt or messages")
        if self.max_tokens <= 0:
            raise InputValidationError("max_tokens must be positive")
        if self.temperature < 0:
            raise InputValidationError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    backend_id: str
    latency: float
    truncated: bool = False


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    mock: bool = False
    endpoint: str = ""
    model: str = ""
    credential_env: str = ""
    seed: int = 0
    quirk: str = "none"
    requests_per_second: float | None = None
    responder: Callable[[str, tuple[ChatMessage, ...], int, str], str] | None = None

    def __post_init__(self):
        if not self.mock and not self.endpoint:
            raise InputValidationError("live backends need an endpoint URL")
        if not self.mock and not self.credential_env:
            env = CRED_ENV_TEMPLATE.format(re.sub(r"\W", "_", self.backend_id.upper()))
            object.__setattr__(self, "credential_env", env)


class _TokenBucket:
    def __init__(self, rate: float, capacity: float | None = None):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self):
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class ChatGateway:
    """Thread-safe multi-backend chat client with a bounded in-flight pool."""

    def __init__(
        self,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transport: httpx.BaseTransport | None = None,
        backoff_base: float = 0.25,
    ):
        self._backends: dict[str, BackendConfig] = {}
        self._buckets: dict[str, _TokenBucket] = {}
        self._registry_lock = threading.Lock()
        self._pool = threading.BoundedSemaphore(max_in_flight)
        self._transport = transport
        self._backoff_base = backoff_base

    def register_backend(self, config: BackendConfig) -> str:
        with self._registry_lock:
            if config.backend_id in self._backends:
                raise DuplicateBackendError(f"backend {config.backend_id!r} already registered")
            self._backends[config.backend_id] = config
            if config.requests_per_second:
                self._buckets[config.backend_id] = _TokenBucket(config.requests_per_second)
        return config.backend_id

    def register_mocks(self, n: int, prefix: str = "m", quirk: str = "none") -> list[str]:
        """Register n deterministic mock backends m1..mn with distinct seeds."""
        ids = []
        for i in range(1, n + 1):
            ids.append(
                self.register_backend(
                    BackendConfig(backend_id=f"{prefix}{i}", mock=True, seed=i, quirk=quirk)
                )
            )
        return ids

    @property
    def backend_ids(self) -> list[str]:
        with self._registry_lock:
            return list(self._backends)

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._registry_lock:
            config = self._backends.get(req.backend_id)
        if config is None:
            raise UnknownBackendError(f"unknown backend {req.backend_id!r}")
        bucket = self._buckets.get(req.backend_id)
        if bucket is not None:
            bucket.acquire()
        with self._pool:
            start = time.monotonic()
            if config.mock:
                responder = config.responder or default_mock_responder
                content = responder(req.system, req.messages, config.seed, config.quirk)
                return ChatResponse(
                    content=content, backend_id=req.backend_id, latency=time.monotonic() - start
                )
            return self._http_complete(req, config, start)

    def _http_complete(self, req: ChatRequest, config: BackendConfig, start: float) -> ChatResponse:
        key = os.environ.get(config.credential_env)
        if not key:
            raise MissingCredentialError(
                f"backend {req.backend_id!r} needs credential env var {config.credential_env}"
            )
        payload_messages = []
        if req.system:
            payload_messages.append({"role": "system", "content": req.system})
        payload_messages += [{"role": m.role.value, "content": m.content} for m in req.messages]
        payload = {
            "model": config.model,
            "messages": payload_messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        deadline = start + req.timeout
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise GatewayTimeout(
                    f"backend {req.backend_id!r} timed out after {attempt} attempts"
                )
            try:
                with httpx.Client(transport=self._transport, timeout=remaining) as client:
                    resp = client.post(
                        config.endpoint,
                        json=payload,
                        headers={"Authorization": f"Bearer {key}"},
                    )
            except httpx.TimeoutException as exc:
                last_error = exc
            except httpx.TransportError as exc:
                last_error = exc
            else:
                if resp.status_code == 200:
                    return self._parse_body(resp, req, start)
                if resp.status_code in (429,) or resp.status_code >= 500:
                    last_error = TransportFailure(
                        f"backend {req.backend_id!r} returned HTTP {resp.status_code}"
                    )
                else:
                    raise TransportFailure(
                        f"backend {req.backend_id!r} returned HTTP {resp.status_code}"
                    )
            if attempt < MAX_ATTEMPTS - 1:
                backoff = self._backoff_base * (2**attempt)
                time.sleep(max(0.0, min(backoff, deadline - time.monotonic())))
        if isinstance(last_error, httpx.TimeoutException):
            raise GatewayTimeout(
                f"backend {req.backend_id!r} timed out after {MAX_ATTEMPTS} attempts"
            ) from last_error
        raise TransportFailure(
            f"backend {req.backend_id!r} failed after {MAX_ATTEMPTS} attempts: {last_error}"
        ) from last_error

    def _parse_body(self, resp: httpx.Response, req: ChatRequest, start: float) -> ChatResponse:
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                f"backend {req.backend_id!r} response missing choices[0].message.content"
            ) from exc
        if not isinstance(content, str):
            raise MalformedResponseError(f"backend {req.backend_id!r} content is not a string")
        truncated = False
        try:
            truncated = body["choices"][0].get("finish_reason") == "length"
        except (AttributeError, KeyError, IndexError, TypeError):
            pass
        return ChatResponse(
            content=content,
            backend_id=req.backend_id,
            latency=time.monotonic() - start,
            truncated=truncated,
        )


# ---------------------------------------------------------------------------
# deterministic template mock


FACTS_RE = re.compile(r"FACTS:\s*(\{.*\})", re.DOTALL)
FEEDBACK_RE = re.compile(r"Feedback:\s*(.+)", re.DOTALL)
CAPTION_RE = re.compile(r"Candidate caption:\s*(.+)", re.DOTALL)
TAGS_LINE_RE = re.compile(r"Matched tags:\s*(.+)")

_RAIN_WORDS = ("rain", "rainfall", "showers", "drizzle", "snow", "downpour")


def _pick(pool: list[str], seed: int, salt: str) -> str:
    return pool[zlib.crc32(f"{seed}:{salt}".encode()) % len(pool)]


def _extract_facts(messages: tuple[ChatMessage, ...]) -> dict:
    for msg in reversed(messages):
        m = FACTS_RE.search(msg.content)
        if m:
            try:
                return json.loads(m.group(1))
            except json.JSONDecodeError:
                return {}
    return {}


def _count_observations(messages: tuple[ChatMessage, ...]) -> int:
    return sum(m.content.count("[System: Tool Output:") for m in messages)


def _mock_perception(messages: tuple[ChatMessage, ...], seed: int) -> str:
    seen = _count_observations(messages)
    plan = [
        ("the overall movement first", "Trend_Detector(window=24)"),
        ("whether a periodic cycle explains it", "FFT_Analyzer(top_k=3)"),
        ("any abrupt jumps left unexplained", "Anomaly_Seeker(delta=auto)"),
    ]
    if seen < len(plan):
        focus, call = plan[seen]
        return f"<think>Checking {focus}.</think>\n<tool>call: {call}</tool>"
    observed = []
    for msg in messages:
        observed += re.findall(r"\[System: Tool Output: ([^\]]*)\]", msg.content)
    summary = " | ".join(observed) if observed else "no tool output captured"
    return f"<answer>feature summary: {summary}</answer>"


def _mock_grounding(messages: tuple[ChatMessage, ...], seed: int, quirk: str) -> str:
    tags = []
    for msg in messages:
        m = TAGS_LINE_RE.search(msg.content)
        if m:
            tags = re.findall(r"\[[^\]]+\]", m.group(1))
    if quirk == "rogue_tags":
        tags = tags + ["[Phenomenon: Heatwave]"]
    facts = _extract_facts(messages)
    direction = facts.get("direction", "flat")
    reasoning = (
        f"The numeric features show a {direction} temperature movement; the retrieved "
        "rules that fired are consistent with it, so their tags apply."
    )
    return f"<reasoning>{reasoning}</reasoning>\n<tags>{', '.join(tags)}</tags>"


def _mock_caption(system: str, messages: tuple[ChatMessage, ...], seed: int, quirk: str) -> str:
    facts = _extract_facts(messages)
    has_feedback = any(FEEDBACK_RE.search(m.content) for m in messages)
    role = "standard_report"
    for candidate in ("standard_report", "trend_analysis", "casual"):
        if candidate in system:
            role = candidate

    direction = facts.get("direction", "flat")
    period = facts.get("period")
    anomaly_t = facts.get("first_anomaly_t")
    peak_t = facts.get("peak_t")
    trough_t = facts.get("trough_t")
    temp_mean = facts.get("temp_mean")
    slope = facts.get("slope")
    precip_max = float(facts.get("precip_max", 0.0) or 0.0)
    wind_max = float(facts.get("wind_max", 0.0) or 0.0)
    tags = facts.get("tags", [])

    clauses = []
    if direction == "up":
        verb = _pick(["rising", "climbing", "warming"], seed, role + "up")
        pace = _pick(["steadily", "gradually", "hour by hour"], seed, role + "pace")
        clauses.append(f"temperatures {verb} {pace}")
    elif direction == "down":
        verb = _pick(["falling", "dropping", "cooling"], seed, role + "down")
        pace = _pick(["steadily", "sharply", "through the period"], seed, role + "pace")
        clauses.append(f"temperatures {verb} {pace}")
    else:
        clauses.append(
            _pick(
                ["little overall temperature change", "a level temperature course",
                 "no sustained temperature movement"],
                seed,
                role + "flat",
            )
        )
    if period:
        period = float(period)
        if 22 <= period <= 26:
            clauses.append(
                _pick(
                    ["a clear daily cycle with period 24 hours",
                     "a strong daily cycle repeating every 24 hours",
                     "regular day-night swings with period 24 hours"],
                    seed,
                    role + "cycle",
                )
            )
        else:
            clauses.append(f"a dominant period near {period:.0f} hours")
    if anomaly_t is not None:
        clauses.append(f"an abrupt shift near t={int(anomaly_t)}")
    if peak_t is not None and role != "casual":
        clauses.append(f"warmest conditions peaking at t={int(peak_t)}")
    if trough_t is not None and role == "standard_report":
        clauses.append(f"coolest near t={int(trough_t)}")
    if temp_mean is not None and role != "casual":
        clauses.append(f"averaging {round(float(temp_mean))} K")
    if facts.get("temp_max") is not None and role != "casual":
        clauses.append(
            f"topping out near {int(facts['temp_max'])} K and dipping to "
            f"{int(facts['temp_min'])} K"
        )
    if slope is not None and role == "trend_analysis" and direction != "flat":
        clauses.append(f"slope {float(slope):+.2f} K per hour")
    if precip_max > 0:
        clauses.append(_pick(["passing rain showers", "spells of rain"], seed, "rain"))
    if wind_max > 8:
        clauses.append("gusty winds")
    if tags:
        phen = [t.split(":")[-1].strip(" ]").replace("_", " ").lower() for t in tags[:1]]
        if phen and phen[0] != "unremarkable":
            clauses.append(f"consistent with a {phen[0]}")

    body = ", ".join(clauses)
    if role == "standard_report":
        caption = f"Station report: {body}."
    elif role == "trend_analysis":
        caption = f"Trend analysis: the dominant signal is {body}."
    else:
        caption = f"{_pick(['Looks like', 'Feels like', 'Expect'], seed, 'casual')} {body}."

    if quirk == "rain_hallucination" and precip_max == 0 and not has_feedback:
        caption += " Heavy rainfall is drenching the region."
    return caption


def _mock_reflection(messages: tuple[ChatMessage, ...]) -> str:
    facts = _extract_facts(messages)
    caption = ""
    for msg in messages:
        m = CAPTION_RE.search(msg.content)
        if m:
            caption = m.group(1).lower()
    precip_max = float(facts.get("precip_max", 0.0) or 0.0)
    mentions_rain = any(w in caption for w in _RAIN_WORDS)
    if mentions_rain and precip_max == 0:
        return (
            "STATUS: REJECT\n<feedback>Hallucination detected: caption claims rainfall, "
            "but the precipitation channel is zero throughout. Remove references to rain."
            "</feedback>"
        )
    return "STATUS: PASS"


def judge_heuristic(caption: str, facts: dict) -> float:
    """Deterministic length-and-coverage rubric score in [0, 1]."""
    words = max(1, len(caption.split()))
    length_fit = max(0.0, 1.0 - abs(words - 45) / 45.0)
    aspects = 0
    covered = 0
    lower = caption.lower()
    checks = [
        (facts.get("direction") in ("up", "down"), ("rising", "climbing", "warming", "falling",
                                                    "dropping", "cooling")),
        (bool(facts.get("period")), ("cycle", "period")),
        (facts.get("first_anomaly_t") is not None, ("abrupt", "shift", "front")),
        (float(facts.get("precip_max", 0.0) or 0.0) > 0, _RAIN_WORDS),
    ]
    for applies, words_ in checks:
        if applies:
            aspects += 1
            if any(w in lower for w in words_):
                covered += 1
    coverage = covered / aspects if aspects else 1.0
    return 0.5 * coverage + 0.5 * length_fit


def _mock_judge(messages: tuple[ChatMessage, ...]) -> str:
    facts = _extract_facts(messages)
    caption = ""
    for msg in messages:
        m = CAPTION_RE.search(msg.content)
        if m:
            caption = m.group(1)
    return f"SCORE: {judge_heuristic(caption, facts):.3f}"


def default_mock_responder(
    system: str, messages: tuple[ChatMessage, ...], seed: int, quirk: str = "none"
) -> str:
    """Pure deterministic function of (system, messages, seed, quirk)."""
    sys_l = system.lower()
    if quirk == "malformed_tool" and "phase 1" in sys_l:
        return "<tool>call: Nope(x=</tool>"
    if "phase 1" in sys_l:
        return _mock_perception(messages, seed)
    if "phase 2" in sys_l:
        return _mock_grounding(messages, seed, quirk)
    if "phase 3" in sys_l:
        return _mock_caption(system, messages, seed, quirk)
    if "phase 4" in sys_l:
        return _mock_reflection(messages)
    if "judge" in sys_l:
        return _mock_judge(messages)
    tail = messages[-1].content if messages else system
    return f"ack: {tail[:120]}"
