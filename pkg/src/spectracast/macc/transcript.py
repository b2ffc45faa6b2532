"""Strict parser for the agent transcript grammar.

Recognized blocks: ``<think>...</think>``, ``<tool>call: Name(k=v, ...)</tool>``
and ``<answer>...</answer>``. Free text between blocks is ignored; unclosed
tags, unknown tools, and malformed argument lists are errors (argument errors
carry the byte offset of the offending tool block).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..core import InputValidationError

TAGS = ("think", "tool", "answer")

# canonical tool schemas; aliases cover the shorthand tool names
TOOL_SCHEMAS: dict[str, dict[str, type]] = {
    "Trend_Detector": {"window": int},
    "FFT_Analyzer": {"top_k": int},
    "Anomaly_Seeker": {"delta": float},  # also accepts the bare word auto
}
TOOL_ALIASES = {
    "Trend_Det": "Trend_Detector",
    "Anomaly_Seek": "Anomaly_Seeker",
}


class TranscriptError(InputValidationError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: dict[str, object]


@dataclass(frozen=True)
class Segment:
    tag: str  # think | tool | answer
    text: str
    tool_call: ToolCall | None = None


@dataclass(frozen=True)
class ReactTranscript:
    segments: tuple[Segment, ...]

    @property
    def tool_calls(self) -> list[ToolCall]:
        return [s.tool_call for s in self.segments if s.tag == "tool"]

    @property
    def answer(self) -> str | None:
        for s in self.segments:
            if s.tag == "answer":
                return s.text
        return None

    @property
    def think_blocks(self) -> list[str]:
        return [s.text for s in self.segments if s.tag == "think"]


_OPEN_RE = re.compile(r"<(think|tool|answer)>")
_CALL_RE = re.compile(r"^\s*call:\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$", re.DOTALL)
_ARG_RE = re.compile(
    r"""^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*
        (   -?\d+\.\d*(?:[eE][-+]?\d+)?     # float
          | -?\.\d+(?:[eE][-+]?\d+)?
          | -?\d+(?:[eE][-+]?\d+)           # scientific int
          | -?\d+                           # int
          | true | false | True | False
          | "[^"]*" | '[^']*'
          | [A-Za-z_][A-Za-z0-9_.]*         # bare word
        )\s*$""",
    re.VERBOSE,
)


def _parse_value(raw: str) -> object:
    if raw in ("true", "True"):
        return True
    if raw in ("false", "False"):
        return False
    if raw[0] in "\"'":
        return raw[1:-1]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _split_args(body: str) -> list[str]:
    parts = []
    depth = 0
    quote = None
    current = []
    for ch in body:
        if quote:
            current.append(ch)
            if ch == quote:
                quote = None
            continue
        if ch in "\"'":
            quote = ch
            current.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            if ch in "([":
                depth += 1
            elif ch in ")]":
                depth -= 1
            current.append(ch)
    if current or parts:
        parts.append("".join(current))
    return parts


def parse_tool_call(body: str, offset: int = 0) -> ToolCall:
    m = _CALL_RE.match(body)
    if not m:
        raise TranscriptError("tool block must look like `call: Name(arg=value, ...)`", offset)
    name, arg_body = m.group(1), m.group(2)
    canonical = TOOL_ALIASES.get(name, name)
    if canonical not in TOOL_SCHEMAS:
        raise TranscriptError(f"unknown tool {name!r}", offset)
    schema = TOOL_SCHEMAS[canonical]
    args: dict[str, object] = {}
    if arg_body.strip():
        for part in _split_args(arg_body):
            am = _ARG_RE.match(part)
            if not am:
                raise TranscriptError(f"malformed argument {part.strip()!r}", offset)
            key, raw = am.group(1), am.group(2)
            if key in args:
                raise TranscriptError(f"duplicate argument {key!r}", offset)
            if key not in schema:
                raise TranscriptError(f"tool {canonical!r} has no argument {key!r}", offset)
            value = _parse_value(raw)
            expected = schema[key]
            if expected is int and not isinstance(value, int):
                raise TranscriptError(f"argument {key!r} must be an integer", offset)
            if expected is float:
                if isinstance(value, bool) or not isinstance(value, (int, float, str)):
                    raise TranscriptError(f"argument {key!r} must be numeric or auto", offset)
                if isinstance(value, str) and value != "auto":
                    raise TranscriptError(f"argument {key!r} must be numeric or auto", offset)
            args[key] = value
    return ToolCall(name=canonical, args=args)


def parse_transcript(text: str) -> ReactTranscript:
    segments: list[Segment] = []
    pos = 0
    answer_seen = False
    while True:
        m = _OPEN_RE.search(text, pos)
        if not m:
            break
        tag = m.group(1)
        close = f"</{tag}>"
        end = text.find(close, m.end())
        if end == -1:
            raise TranscriptError(f"unclosed <{tag}> tag", m.start())
        inner = text[m.end() : end]
        if _OPEN_RE.search(inner):
            raise TranscriptError(f"nested tag inside <{tag}> block", m.start())
        if tag == "tool":
            call = parse_tool_call(inner, offset=m.end())
            segments.append(Segment(tag=tag, text=inner.strip(), tool_call=call))
        else:
            if tag == "answer":
                if answer_seen:
                    raise TranscriptError("transcript has more than one <answer> block", m.start())
                answer_seen = True
            segments.append(Segment(tag=tag, text=inner.strip()))
        pos = end + len(close)
    return ReactTranscript(segments=tuple(segments))


def serialize_transcript(transcript: ReactTranscript) -> str:
    parts = []
    for seg in transcript.segments:
        if seg.tag == "tool":
            call = seg.tool_call
            args = ", ".join(f"{k}={_format_value(v)}" for k, v in call.args.items())
            parts.append(f"<tool>call: {call.name}({args})</tool>")
        else:
            parts.append(f"<{seg.tag}>{seg.text}</{seg.tag}>")
    return "\n".join(parts)


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value if re.match(r"^[A-Za-z_][A-Za-z0-9_.]*$", value) else f'"{value}"'
    return repr(value)
