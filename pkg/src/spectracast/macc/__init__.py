"""Multi-agent collaborative captioning: perception, grounding, generation,
reflection, refinement, and caption selection."""

from .pipeline import (
    GroundedKnowledge,
    PipelineError,
    SelectionResult,
    caption_record,
    generate_candidates,
    ground,
    refine_loop,
    reflect,
    run_perception,
    select_caption,
)
from .reflector import ReflectorVerdict, reflect_deterministic
from .rules import Condition, Facet, Rule, Tag, default_rules, load_rules, match_rules
from .transcript import (
    ReactTranscript,
    Segment,
    ToolCall,
    TranscriptError,
    parse_transcript,
    serialize_transcript,
)

__all__ = [
    "GroundedKnowledge",
    "PipelineError",
    "SelectionResult",
    "caption_record",
    "generate_candidates",
    "ground",
    "refine_loop",
    "reflect",
    "run_perception",
    "select_caption",
    "ReflectorVerdict",
    "reflect_deterministic",
    "Condition",
    "Facet",
    "Rule",
    "Tag",
    "default_rules",
    "load_rules",
    "match_rules",
    "ReactTranscript",
    "Segment",
    "ToolCall",
    "TranscriptError",
    "parse_transcript",
    "serialize_transcript",
]
