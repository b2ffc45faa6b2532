import pytest

from spectracast.macc.transcript import (
    ReactTranscript,
    TranscriptError,
    parse_transcript,
    parse_tool_call,
    serialize_transcript,
)

# same shape as a real phase-1 exchange: two reasoning blocks, two tool calls
PHASE1_STYLE = """
<think>
The sequence drops quickly. Before calling it an anomaly I should measure the
overall movement.
</think>

<tool> call: Trend_Detector(window=24) </tool>

[System: Tool Output: Trend=-0.85 (Strong Downward), p-value<0.01]

<think>
The movement is significant. A periodicity check will tell whether this is
just the daily cycle.
</think>

<tool> call: FFT_Analyzer(top_k=3) </tool>
"""


def test_phase1_style_transcript():
    t = parse_transcript(PHASE1_STYLE)
    assert len(t.think_blocks) == 2
    calls = t.tool_calls
    assert [c.name for c in calls] == ["Trend_Detector", "FFT_Analyzer"]
    assert calls[0].args == {"window": 24}
    assert calls[1].args == {"top_k": 3}
    assert t.answer is None


def test_answer_only():
    t = parse_transcript("<answer>done</answer>")
    assert t.answer == "done"
    assert t.tool_calls == []


def test_unknown_tool():
    with pytest.raises(TranscriptError, match="unknown tool"):
        parse_transcript("<tool>call: Nope(x=1)</tool>")


def test_unclosed_tag():
    with pytest.raises(TranscriptError, match="unclosed"):
        parse_transcript("<think>hello")


def test_two_answers_rejected():
    with pytest.raises(TranscriptError, match="more than one"):
        parse_transcript("<answer>a</answer><answer>b</answer>")


def test_malformed_args_report_offset():
    text = "leading junk <tool>call: Trend_Detector(window=)</tool>"
    with pytest.raises(TranscriptError, match="byte offset"):
        parse_transcript(text)


def test_alias_names_resolve():
    call = parse_tool_call("call: Trend_Det(window=12)")
    assert call.name == "Trend_Detector"
    call2 = parse_tool_call("call: Anomaly_Seek(delta=auto)")
    assert call2.name == "Anomaly_Seeker"
    assert call2.args["delta"] == "auto"


def test_arg_types_checked():
    with pytest.raises(TranscriptError, match="integer"):
        parse_tool_call("call: FFT_Analyzer(top_k=3.5)")
    with pytest.raises(TranscriptError, match="numeric or auto"):
        parse_tool_call("call: Anomaly_Seeker(delta=whenever)")
    call = parse_tool_call("call: Anomaly_Seeker(delta=2.5)")
    assert call.args["delta"] == 2.5


def test_unknown_argument_rejected():
    with pytest.raises(TranscriptError, match="no argument"):
        parse_tool_call("call: FFT_Analyzer(bins=3)")


def test_free_text_ignored():
    t = parse_transcript("noise <think>a</think> more noise <answer>b</answer> trailing")
    assert [s.tag for s in t.segments] == ["think", "answer"]


def test_serialize_round_trip():
    t = parse_transcript(PHASE1_STYLE + "<answer>summary text</answer>")
    text = serialize_transcript(t)
    t2 = parse_transcript(text)
    assert t2.segments == t.segments
    assert serialize_transcript(t2) == text
