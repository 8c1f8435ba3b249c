"""Deterministic text realization of explanation IRs.

Surface forms are fixed English templates with slot filling: a header
naming age and gender, one sentence per rule with non-contradictory
conditions joined by "and" and contradictory ones appended as "even if"
clauses, and a verbal probability phrase closing each rule sentence.
Realization is byte-for-byte deterministic for a fixed IR and scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import yaml

from .dataset import RiskLabel
from .errors import SchemaError, ValidationError
from .explain import ExplanationIR, ExplanationKind
from .tree import Rule

_LABEL_TEXT = {RiskLabel.HIGH: "high risk", RiskLabel.LOW: "low risk"}


@dataclass(frozen=True)
class VerbalScale:
    """Probability bands mapped to phrases, plus the low-confidence override.

    high_probability_threshold controls when a low-confidence probability
    reads as the low-confidence phrase; None means the top band's threshold.
    """

    bands: tuple[tuple[float, str], ...]
    low_confidence_phrase: str = "possibly"
    confidence_threshold: float = 0.95
    high_probability_threshold: float | None = None

    def __post_init__(self) -> None:
        if not self.bands:
            raise ValidationError("verbal scale needs at least one band")
        thresholds = [t for t, _ in self.bands]
        if any(b >= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValidationError("band thresholds must be strictly decreasing")
        if thresholds[-1] != 0.0:
            raise ValidationError("the last band threshold must be 0.0 so every p maps")
        phrases = [p for _, p in self.bands]
        if any(not p for p in phrases) or len(set(phrases)) != len(phrases):
            raise ValidationError("band phrases must be non-empty and distinct")
        if not self.low_confidence_phrase:
            raise ValidationError("low-confidence phrase must be non-empty")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValidationError("confidence threshold must be in [0, 1]")
        if self.high_probability_threshold is not None and not (
            0.0 <= self.high_probability_threshold <= 1.0
        ):
            raise ValidationError("high-probability threshold must be in [0, 1]")

    @property
    def high_band(self) -> float:
        if self.high_probability_threshold is not None:
            return self.high_probability_threshold
        return self.bands[0][0]


def verbalize_probability(p: float, confidence: float, scale: VerbalScale) -> str:
    """Phrase for a probability, with the low-confidence "possibly" override.

    A high probability backed by low confidence reads as "possibly";
    otherwise the phrase of the highest band whose threshold <= p.
    """
    if not 0.0 <= p <= 1.0 or not 0.0 <= confidence <= 1.0:
        raise ValidationError("probability and confidence must be in [0, 1]")
    if confidence < scale.confidence_threshold and p >= scale.high_band:
        return scale.low_confidence_phrase
    for threshold, phrase in scale.bands:
        if p >= threshold:
            return phrase
    raise AssertionError("unreachable: last band threshold is 0.0")


def realize_rule(rule: Rule, scale: VerbalScale) -> str:
    """One sentence for a rule: plain conditions, then "even if" clauses,
    ending with the verbalized outcome phrase and risk label."""
    phrase = verbalize_probability(rule.probability, rule.confidence, scale)
    outcome = f"the patient is {phrase} at {_LABEL_TEXT[rule.outcome]}"
    if not rule.conditions:
        return f"In every case, {outcome}."
    plain = [c for c in rule.conditions if not c.contradictory]
    contradictory = [c for c in rule.conditions if c.contradictory]
    parts: list[str] = []
    if plain:
        joined = " and ".join(f"{c.feature} is {c.value}" for c in plain)
        parts.append(f"When {joined}")
    parts.extend(f"even if {c.feature} is {c.value}" for c in contradictory)
    lead = ", ".join(parts)
    if not plain:
        lead = lead[0].upper() + lead[1:]
    return f"{lead}, {outcome}."


def _header_line(ir: ExplanationIR) -> str:
    age, gender = ir.header
    if ir.kind is ExplanationKind.GLOBAL_TREE:
        who = f"{gender} patients" if gender else "patients"
    else:
        who = f"a {gender} patient" if gender else "a patient"
    return f"This explanation is for {who} aged {age}."


def realize(ir: ExplanationIR, scale: VerbalScale) -> str:
    """Render an IR to its narrative text (no trailing newline)."""
    if ir.kind is ExplanationKind.SHAP_LIST:
        return realize_shap(ir.attributions or (), ir.header)
    lines = [_header_line(ir)]
    if ir.kind is ExplanationKind.LOCAL_TREE:
        lines.extend(realize_rule(rule, scale) for rule in ir.rules)
    else:
        lines.append("The model predicts high risk in the following cases:")
        for i, rule in enumerate(ir.rules, start=1):
            lines.append(f"Rule {i}: {realize_rule(rule, scale)}")
        if ir.triggered_index is not None:
            lines.append(f"This patient matches rule {ir.triggered_index + 1}.")
    return "\n".join(lines)


def realize_shap(
    items: Sequence[tuple[str, float]], header: tuple[str, str]
) -> str:
    """Header plus one bullet per positively contributing feature.

    Scores are not printed; the bullet order carries the importance
    ranking. An empty list gets a fixed no-contribution line.
    """
    age, gender = header
    who = f"a {gender} patient" if gender else "a patient"
    lines = [f"This explanation is for {who} aged {age}."]
    if not items:
        lines.append("No features made a positive contribution to this prediction.")
    else:
        lines.append("The prediction was driven by these features, in order of importance:")
        lines.extend(f"- {feature}" for feature, _ in items)
    return "\n".join(lines)


# --- config loading ----------------------------------------------------------

_SCALE_KEYS = {"bands", "low_confidence_phrase", "confidence_threshold",
               "high_probability_threshold"}


def load_verbal_scale(path: str | Path) -> VerbalScale:
    """Load a VerbalScale from YAML (see docs/config_formats.md)."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "bands" not in doc:
        raise SchemaError(f"{path}: expected a mapping with a 'bands' list")
    unknown = set(doc) - _SCALE_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown keys {sorted(unknown)}")
    bands = []
    for entry in doc["bands"]:
        if not isinstance(entry, dict) or set(entry) != {"threshold", "phrase"}:
            raise SchemaError(f"{path}: each band needs exactly threshold and phrase")
        bands.append((float(entry["threshold"]), str(entry["phrase"])))
    high = doc.get("high_probability_threshold")
    return VerbalScale(
        bands=tuple(bands),
        low_confidence_phrase=str(doc.get("low_confidence_phrase", "possibly")),
        confidence_threshold=float(doc.get("confidence_threshold", 0.95)),
        high_probability_threshold=float(high) if high is not None else None,
    )


def default_verbal_scale() -> VerbalScale:
    """The packaged probability wording (a reconstruction; fully overridable)."""
    ref = resources.files("treetalk") / "configs" / "verbal_scale.yaml"
    with resources.as_file(ref) as path:
        return load_verbal_scale(path)
