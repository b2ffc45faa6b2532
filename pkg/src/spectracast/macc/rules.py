"""Declarative synoptic rule knowledge base for semantic grounding.

Rules are predicate lists over features derived from a PerceptionVector;
matching is deterministic. The default KB ships as a line-delimited JSON data
file next to this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from ..core import InputValidationError, PerceptionVector

OPS = ("<", ">", "<=", ">=", "sign", "within")


class Facet(str, Enum):
    PHENOMENON = "phenomenon"
    SCALE = "scale"
    STATE = "state"


@dataclass(frozen=True)
class Tag:
    facet: Facet
    value: str

    def __post_init__(self):
        object.__setattr__(self, "facet", Facet(self.facet))

    def render(self) -> str:
        return f"[{self.facet.value.capitalize()}: {self.value}]"


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in OPS:
            raise InputValidationError(f"unknown comparator {self.op!r}")
        if self.op == "within":
            v = self.value
            if not (isinstance(v, (list, tuple)) and len(v) == 2):
                raise InputValidationError("within comparator needs a [lo, hi] pair")

    def holds(self, features: dict[str, float]) -> bool:
        if self.field not in features:
            return False
        x = features[self.field]
        if self.op == "<":
            return x < float(self.value)
        if self.op == ">":
            return x > float(self.value)
        if self.op == "<=":
            return x <= float(self.value)
        if self.op == ">=":
            return x >= float(self.value)
        if self.op == "sign":
            return int(np.sign(x)) == int(self.value)
        lo, hi = self.value
        return float(lo) <= x <= float(hi)


@dataclass(frozen=True)
class Rule:
    id: str
    text: str
    conditions: tuple[Condition, ...]
    tags: tuple[Tag, ...]

    def __post_init__(self):
        if not self.conditions:
            raise InputValidationError(f"rule {self.id!r} needs at least one condition")
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "tags", tuple(self.tags))

    def matches(self, features: dict[str, float]) -> bool:
        return all(c.holds(features) for c in self.conditions)


DEFAULT_TAG = Tag(facet=Facet.PHENOMENON, value="Unremarkable")


def rule_features(v: PerceptionVector) -> dict[str, float]:
    """Flatten a PerceptionVector into the rule-condition namespace."""
    features = {
        "trend_slope": v.trend_slope,
        "trend_p_value": v.trend_p_value,
        "anomaly_count": float(v.anomaly_count),
        "first_anomaly_t": float(v.anomaly_indices[0]) if v.anomaly_indices else -1.0,
        "spectral_entropy": v.spectral_entropy,
        "acf_lag24": v.acf_lag24,
        "top_peak_period": v.top_peak_period,
        "top_peak_power": v.top_peaks[0][1] if v.top_peaks else 0.0,
    }
    for name, cs in v.channel_stats.items():
        features[f"{name}_min"] = cs.min
        features[f"{name}_max"] = cs.max
        features[f"{name}_mean"] = cs.mean
        features[f"{name}_std"] = cs.std
        features[f"{name}_spread"] = cs.max - cs.min
        # positive when the channel peaks after its trough (net rising posture)
        features[f"{name}_late_peak"] = float(cs.argmax - cs.argmin)
    return features


def match_rules(v: PerceptionVector, kb: list[Rule]) -> tuple[list[Rule], list[Tag]]:
    """Deterministic match: all conditions hold; tags deduplicated in order."""
    if not kb:
        raise InputValidationError("rule knowledge base is empty")
    features = rule_features(v)
    matched = [rule for rule in kb if rule.matches(features)]
    tags: list[Tag] = []
    seen = set()
    for rule in matched:
        for tag in rule.tags:
            key = (tag.facet, tag.value)
            if key not in seen:
                seen.add(key)
                tags.append(tag)
    if not tags:
        tags = [DEFAULT_TAG]
    return matched, tags


def rule_from_json(obj: dict) -> Rule:
    return Rule(
        id=obj["id"],
        text=obj.get("text", ""),
        conditions=tuple(
            Condition(field=c["field"], op=c["op"], value=c["value"]) for c in obj["conditions"]
        ),
        tags=tuple(Tag(facet=t["facet"], value=t["value"]) for t in obj["tags"]),
    )


def load_rules(path: str | Path) -> list[Rule]:
    rules = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rules.append(rule_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise InputValidationError(f"rule file line {lineno}: {exc}") from None
    return rules


def default_rules() -> list[Rule]:
    data = resources.files("spectracast.macc").joinpath("data/rules.jsonl").read_text()
    return [rule_from_json(json.loads(line)) for line in data.splitlines() if line.strip()]
