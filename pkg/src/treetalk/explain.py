"""Structured explanation content for local, global, and SHAP explanations.

The intermediate representation (IR) is language-independent: rules in
presentation order, per-condition contradiction flags, the triggered-rule
index for global explanations, and the cognitive-chunk count (distinct
features mentioned). The narration layer renders IRs to text.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .analytics import FeatureSelection
from .attribution import AttributionVector, filter_positive_sorted
from .dataset import PatientRecord, RiskLabel
from .errors import SchemaError, ValidationError
from .tree import DecisionTree, Rule, decision_path, extract_rules, predict, tested_features


class RiskDirection(Enum):
    EXPECTED_HIGH = "high"
    EXPECTED_LOW = "low"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class ExpectationMap:
    """Which (feature, value) pairs a reader expects in which risk direction."""

    entries: Mapping[tuple[str, str], RiskDirection]

    def direction(self, feature: str, value: str) -> RiskDirection:
        return self.entries.get((feature, value), RiskDirection.NEUTRAL)


class ExplanationKind(Enum):
    LOCAL_TREE = "local"
    GLOBAL_TREE = "global"
    SHAP_LIST = "shap"


@dataclass(frozen=True)
class ExplanationIR:
    kind: ExplanationKind
    header: tuple[str, str]  # (age descriptor, gender)
    rules: tuple[Rule, ...]
    triggered_index: int | None = None
    attributions: tuple[tuple[str, float], ...] | None = None
    chunk_count: int = 0


def detect_contradictions(rule: Rule, em: ExpectationMap) -> Rule:
    """Flag conditions whose expected risk direction opposes the rule outcome."""
    opposite = (
        RiskDirection.EXPECTED_LOW
        if rule.outcome is RiskLabel.HIGH
        else RiskDirection.EXPECTED_HIGH
    )
    conditions = tuple(
        replace(c, contradictory=em.direction(c.feature, c.value) is opposite)
        for c in rule.conditions
    )
    return replace(rule, conditions=conditions)


def _chunks(rules: Sequence[Rule]) -> int:
    return len({c.feature for rule in rules for c in rule.conditions})


def _format_age(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def _patient_header(
    record: PatientRecord, age_feature: str, gender_feature: str
) -> tuple[str, str]:
    age = record.features.get(age_feature)
    gender = record.features.get(gender_feature)
    return (
        _format_age(float(age)) if age is not None else "unknown age",
        str(gender) if gender is not None else "",
    )


def build_local_ir(
    tree: DecisionTree,
    record: PatientRecord,
    em: ExpectationMap,
    *,
    age_feature: str = "Age",
    gender_feature: str = "Gender",
) -> ExplanationIR:
    """IR for the single decision path triggered by the record."""
    rule = detect_contradictions(decision_path(tree, record), em)
    return ExplanationIR(
        kind=ExplanationKind.LOCAL_TREE,
        header=_patient_header(record, age_feature, gender_feature),
        rules=(rule,),
        chunk_count=_chunks((rule,)),
    )


def build_global_ir(
    tree: DecisionTree,
    record: PatientRecord,
    em: ExpectationMap,
    *,
    age_feature: str = "Age",
    gender_feature: str = "Gender",
) -> ExplanationIR:
    """IR enumerating all high-risk rules, sorted by descending confidence.

    Ties break by descending probability, then shorter rules first, then
    leaf id. The triggered index is present only when the record routes to
    a high-risk leaf.
    """
    rules = extract_rules(tree, RiskLabel.HIGH)
    if not rules:
        raise ValidationError(
            "tree has no high-risk leaves; nothing to explain globally"
        )
    flagged = [detect_contradictions(r, em) for r in rules]
    ordered = tuple(
        sorted(
            flagged,
            key=lambda r: (-r.confidence, -r.probability, len(r.conditions), r.leaf_id),
        )
    )
    label, leaf_id = predict(tree, record)
    triggered = None
    if label is RiskLabel.HIGH:
        triggered = next(i for i, r in enumerate(ordered) if r.leaf_id == leaf_id)
    if tree.cohort is not None:
        header = (f"{tree.cohort.age_min} to {tree.cohort.age_max}",
                  tree.cohort.gender or "")
    else:
        header = _patient_header(record, age_feature, gender_feature)
    return ExplanationIR(
        kind=ExplanationKind.GLOBAL_TREE,
        header=header,
        rules=ordered,
        triggered_index=triggered,
        chunk_count=_chunks(ordered),
    )


def build_shap_ir(
    record: PatientRecord,
    attribution: AttributionVector,
    *,
    age_feature: str = "Age",
    gender_feature: str = "Gender",
) -> ExplanationIR:
    """IR carrying the positively contributing features in importance order."""
    items = tuple(filter_positive_sorted(attribution))
    return ExplanationIR(
        kind=ExplanationKind.SHAP_LIST,
        header=_patient_header(record, age_feature, gender_feature),
        rules=(),
        attributions=items,
        chunk_count=len(items),
    )


def correct_importance(
    ir: ExplanationIR,
    tree: DecisionTree,
    attribution: AttributionVector | None = None,
    *,
    display_features: Sequence[str],
) -> FeatureSelection:
    """The survey's correct selection C over the displayed feature list.

    SHAP: features with a positive score; local: features on the decision
    path; global: all features tested anywhere in the tree.
    """
    if ir.kind is ExplanationKind.SHAP_LIST:
        if attribution is None:
            raise ValidationError("correct_importance for a SHAP IR needs the attribution vector")
        selected = {
            f for f, s in zip(attribution.features, attribution.scores) if s > 0.0
        }
    elif ir.kind is ExplanationKind.LOCAL_TREE:
        selected = {c.feature for c in ir.rules[0].conditions}
    else:
        selected = set(tested_features(tree))
    return FeatureSelection.from_features(selected, display_features)


# --- config loading ----------------------------------------------------------

_DIRECTIONS = {
    "high": RiskDirection.EXPECTED_HIGH,
    "low": RiskDirection.EXPECTED_LOW,
    "neutral": RiskDirection.NEUTRAL,
}


def load_expectation_map(path: str | Path) -> ExpectationMap:
    """Load an ExpectationMap from YAML (see docs/config_formats.md)."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "expectations" not in doc:
        raise SchemaError(f"{path}: expected a mapping with an 'expectations' list")
    extra = set(doc) - {"expectations"}
    if extra:
        raise SchemaError(f"{path}: unknown top-level keys {sorted(extra)}")
    entries: dict[tuple[str, str], RiskDirection] = {}
    for entry in doc["expectations"]:
        if not isinstance(entry, dict) or set(entry) != {"feature", "value", "direction"}:
            raise SchemaError(
                f"{path}: each expectation needs exactly feature, value, direction"
            )
        direction = _DIRECTIONS.get(str(entry["direction"]))
        if direction is None:
            raise SchemaError(
                f"{path}: direction must be one of {sorted(_DIRECTIONS)}, "
                f"got {entry['direction']!r}"
            )
        key = (str(entry["feature"]), str(entry["value"]))
        if key in entries:
            raise SchemaError(f"{path}: duplicate expectation for {key}")
        entries[key] = direction
    return ExpectationMap(entries)


def default_expectation_map() -> ExpectationMap:
    """The packaged lay-expectation defaults for the 11 CHD features."""
    ref = resources.files("treetalk") / "configs" / "chd_expectations.yaml"
    with resources.as_file(ref) as path:
        return load_expectation_map(path)
