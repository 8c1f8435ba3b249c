"""Depth-bounded decision trees over categorical features.

Trees use multiway splits: an internal node tests one feature and carries a
branch for every declared category of that feature, so dispatch is total on
schema-conforming records. Leaves carry the model label plus the training
statistics used by the narration layer: probability (fraction of the parent
node's records that reach the leaf) and confidence (one minus the one-sided
exact binomial p-value of the leaf's class count against the parent class
proportion).
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Mapping, Sequence

from .dataset import Bin, CategorySpec, PatientRecord, RecordSet, RiskLabel
from .errors import SchemaError, ValidationError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Leaf:
    node_id: int
    label: RiskLabel
    probability: float
    confidence: float
    support: int
    parent_support: int
    unsupported: bool = False


@dataclass(frozen=True)
class Split:
    node_id: int
    feature: str
    branches: Mapping[str, "TreeNode"]
    support: int


TreeNode = Leaf | Split


@dataclass(frozen=True)
class Cohort:
    age_min: int
    age_max: int
    gender: str | None = None

    def describe(self) -> str:
        gender = self.gender or "any gender"
        return f"{self.age_min} - {self.age_max}, {gender}"


@dataclass(frozen=True)
class DecisionTree:
    root: TreeNode
    depth: int
    spec: CategorySpec
    cohort: Cohort | None = None
    training_accuracy: float | None = None


@dataclass(frozen=True)
class Condition:
    feature: str
    value: str
    contradictory: bool = False


@dataclass(frozen=True)
class Rule:
    """One root-to-leaf path as an if-then rule."""

    conditions: tuple[Condition, ...]
    outcome: RiskLabel
    probability: float
    confidence: float
    leaf_id: int


def _entropy(counts: Iterable[int]) -> float:
    total = sum(counts)
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def _label_counts(records: Sequence[PatientRecord]) -> Counter:
    return Counter(r.label for r in records)


def _majority_label(counts: Counter) -> RiskLabel:
    high = counts.get(RiskLabel.HIGH, 0)
    low = counts.get(RiskLabel.LOW, 0)
    # Ties break toward HighRisk (deterministic, conservative for screening).
    return RiskLabel.HIGH if high >= low else RiskLabel.LOW


def exact_binomial_sf(k: int, n: int, p: float) -> float:
    """P(X >= k) for X ~ Binomial(n, p), by direct enumeration."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    return sum(math.comb(n, i) * p**i * (1.0 - p) ** (n - i) for i in range(k, n + 1))


def _leaf_confidence(label_count: int, support: int, parent_proportion: float) -> float:
    pvalue = exact_binomial_sf(label_count, support, parent_proportion)
    return 1.0 - min(1.0, pvalue)


def _gain(records: Sequence[PatientRecord], feature: str, labels: Sequence[str]) -> float:
    parent = _entropy(_label_counts(records).values())
    total = len(records)
    children = 0.0
    for value in labels:
        group = [r for r in records if r.features[feature] == value]
        if group:
            children += len(group) / total * _entropy(_label_counts(group).values())
    return parent - children


def fit_greedy(rs: RecordSet, max_depth: int, min_leaf_support: int = 5) -> DecisionTree:
    """Grow a tree by information gain with deterministic tie-breaking.

    Splits are chosen by entropy gain over categorical features only;
    ties go to the lexicographically smallest feature name. Recursion stops
    at max depth, purity, support below the minimum, or when no remaining
    feature takes at least two distinct values. While a node is impure the
    tree keeps splitting even through zero-gain levels, so parity-style
    targets (XOR) stay representable within the depth budget.
    """
    if max_depth < 1:
        raise ValidationError("max depth must be >= 1")
    if not rs.records:
        raise ValidationError("cannot fit a tree on an empty RecordSet")
    if any(r.label is None for r in rs.records):
        raise ValidationError("all records must be labeled for fitting")
    spec = rs.spec
    candidates = spec.categorical_features
    ids = itertools.count()

    def grow(
        records: Sequence[PatientRecord],
        used: frozenset[str],
        depth: int,
        parent_support: int,
        parent_counts: Counter,
    ) -> TreeNode:
        node_id = next(ids)
        counts = _label_counts(records)
        support = len(records)
        label = _majority_label(counts) if support else _majority_label(parent_counts)

        def leaf() -> Leaf:
            probability = support / parent_support if parent_support else 0.0
            if support:
                p0 = parent_counts.get(label, 0) / sum(parent_counts.values())
                confidence = _leaf_confidence(counts.get(label, 0), support, p0)
            else:
                confidence = 0.0
            return Leaf(
                node_id=node_id,
                label=label,
                probability=probability,
                confidence=confidence,
                support=support,
                parent_support=parent_support,
                unsupported=parent_support == 0,
            )

        pure = len([c for c in counts.values() if c]) <= 1
        if depth >= max_depth or pure or support < min_leaf_support:
            return leaf()
        best_feature = None
        best_gain = -1.0
        for feature in sorted(set(candidates) - used):
            present = {r.features[feature] for r in records}
            if len(present) < 2:
                continue
            g = _gain(records, feature, spec.labels_for(feature))
            if g > best_gain:
                best_feature, best_gain = feature, g
        if best_feature is None:
            return leaf()
        # Branches are created in sorted category order so node ids and
        # traversal order are stable across serialize/deserialize cycles.
        branches: dict[str, TreeNode] = {}
        for value in sorted(spec.labels_for(best_feature)):
            group = [r for r in records if r.features[best_feature] == value]
            branches[value] = grow(group, used | {best_feature}, depth + 1, support, counts)
        return Split(node_id=node_id, feature=best_feature, branches=branches, support=support)

    total_counts = _label_counts(rs.records)
    root = grow(rs.records, frozenset(), 0, len(rs.records), total_counts)
    tree = DecisionTree(root=root, depth=tree_depth(root), spec=spec)
    return replace(tree, training_accuracy=accuracy(tree, rs))


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(child) for child in node.branches.values())


def iter_nodes(node: TreeNode) -> Iterator[TreeNode]:
    """Preorder traversal; children in declared category order."""
    yield node
    if isinstance(node, Split):
        for child in node.branches.values():
            yield from iter_nodes(child)


def leaves(tree: DecisionTree) -> tuple[Leaf, ...]:
    return tuple(n for n in iter_nodes(tree.root) if isinstance(n, Leaf))


def tested_features(tree: DecisionTree) -> frozenset[str]:
    return frozenset(n.feature for n in iter_nodes(tree.root) if isinstance(n, Split))


def route(node: TreeNode, features: Mapping[str, str | float]) -> Leaf:
    """Dispatch a feature mapping down to its leaf."""
    while isinstance(node, Split):
        if node.feature not in features:
            raise ValidationError(f"record does not supply tested feature {node.feature!r}")
        value = features[node.feature]
        if value not in node.branches:
            raise ValidationError(
                f"value {value!r} of {node.feature!r} is outside the branch map"
            )
        node = node.branches[value]
    return node


def predict(tree: DecisionTree, record: PatientRecord) -> tuple[RiskLabel, int]:
    """Return the predicted label and the id of the leaf reached."""
    leaf = route(tree.root, record.features)
    return leaf.label, leaf.node_id


def decision_path(tree: DecisionTree, record: PatientRecord) -> Rule:
    """The tests along the record's prediction path, in root-to-leaf order."""
    conditions: list[Condition] = []
    node = tree.root
    while isinstance(node, Split):
        if node.feature not in record.features:
            raise ValidationError(f"record does not supply tested feature {node.feature!r}")
        value = record.features[node.feature]
        if value not in node.branches:
            raise ValidationError(
                f"value {value!r} of {node.feature!r} is outside the branch map"
            )
        conditions.append(Condition(node.feature, str(value)))
        node = node.branches[value]
    return Rule(
        conditions=tuple(conditions),
        outcome=node.label,
        probability=node.probability,
        confidence=node.confidence,
        leaf_id=node.node_id,
    )


def extract_rules(tree: DecisionTree, label: RiskLabel) -> tuple[Rule, ...]:
    """One Rule per leaf with the given label, in preorder (leaf id order)."""
    out: list[Rule] = []

    def walk(node: TreeNode, conditions: tuple[Condition, ...]) -> None:
        if isinstance(node, Leaf):
            if node.label is label:
                out.append(
                    Rule(
                        conditions=conditions,
                        outcome=node.label,
                        probability=node.probability,
                        confidence=node.confidence,
                        leaf_id=node.node_id,
                    )
                )
            return
        for value, child in node.branches.items():
            walk(child, conditions + (Condition(node.feature, value),))

    walk(tree.root, ())
    return tuple(out)


def accuracy(tree: DecisionTree, rs: RecordSet) -> float:
    if not rs.records:
        raise ValidationError("accuracy is undefined on an empty RecordSet")
    if any(r.label is None for r in rs.records):
        raise ValidationError("accuracy needs labeled records")
    hits = sum(1 for r in rs.records if predict(tree, r)[0] is r.label)
    return hits / len(rs.records)


def annotate_leaves(tree: DecisionTree, rs: RecordSet) -> DecisionTree:
    """Recompute node supports and leaf probability/confidence from rs.

    Leaf labels are unchanged (they are the model); probability is the
    fraction of the parent node's records that reach the leaf. A leaf whose
    parent receives zero records is marked unsupported.
    """
    if set(rs.spec.features) != set(tree.spec.features):
        raise SchemaError("RecordSet schema does not match the tree schema")
    if any(r.label is None for r in rs.records):
        raise ValidationError("annotation needs labeled records")

    def rebuild(
        node: TreeNode, records: Sequence[PatientRecord], parent_support: int,
        parent_counts: Counter,
    ) -> TreeNode:
        support = len(records)
        if isinstance(node, Leaf):
            if parent_support == 0:
                return replace(
                    node, probability=0.0, confidence=0.0, support=0,
                    parent_support=0, unsupported=True,
                )
            counts = _label_counts(records)
            parent_total = sum(parent_counts.values())
            p0 = parent_counts.get(node.label, 0) / parent_total if parent_total else 0.0
            confidence = _leaf_confidence(counts.get(node.label, 0), support, p0)
            return replace(
                node,
                probability=support / parent_support,
                confidence=confidence,
                support=support,
                parent_support=parent_support,
                unsupported=False,
            )
        counts = _label_counts(records)
        branches = {
            value: rebuild(
                child,
                [r for r in records if r.features[node.feature] == value],
                support,
                counts,
            )
            for value, child in node.branches.items()
        }
        return replace(node, branches=branches, support=support)

    root = rebuild(tree.root, rs.records, len(rs.records), _label_counts(rs.records))
    return replace(tree, root=root)


# --- serialization -----------------------------------------------------------

_TOP_KEYS = {"schema_version", "cohort", "depth", "training_accuracy", "features", "nodes"}
_COHORT_KEYS = {"age_min", "age_max", "gender"}
_SPLIT_KEYS = {"id", "kind", "feature", "support", "branches"}
_LEAF_KEYS = {"id", "kind", "label", "probability", "confidence", "support",
              "parent_support", "unsupported"}
_FEATURE_KEYS = {"name", "kind", "bins", "values", "range"}


def serialize(tree: DecisionTree) -> str:
    """Render the tree document (JSON, sorted keys, stable bytes).

    Format documented in docs/tree_format.md; nodes are listed in preorder
    with the root first, and branches reference child node ids.
    """
    nodes = []
    for node in iter_nodes(tree.root):
        if isinstance(node, Leaf):
            nodes.append(
                {
                    "id": node.node_id,
                    "kind": "leaf",
                    "label": node.label.value,
                    "probability": node.probability,
                    "confidence": node.confidence,
                    "support": node.support,
                    "parent_support": node.parent_support,
                    "unsupported": node.unsupported,
                }
            )
        else:
            nodes.append(
                {
                    "id": node.node_id,
                    "kind": "split",
                    "feature": node.feature,
                    "support": node.support,
                    "branches": {v: c.node_id for v, c in node.branches.items()},
                }
            )
    features = []
    spec = tree.spec
    for name in spec.features:
        if name in spec.binned:
            features.append(
                {
                    "name": name,
                    "kind": "binned",
                    "bins": [
                        {"label": b.label, "lower": b.lower, "upper": b.upper}
                        for b in spec.binned[name]
                    ],
                }
            )
        elif name in spec.categorical:
            features.append({"name": name, "kind": "categorical",
                             "values": list(spec.categorical[name])})
        else:
            features.append({"name": name, "kind": "numeric",
                             "range": list(spec.numeric[name])})
    doc = {
        "schema_version": SCHEMA_VERSION,
        "cohort": (
            {"age_min": tree.cohort.age_min, "age_max": tree.cohort.age_max,
             "gender": tree.cohort.gender}
            if tree.cohort
            else None
        ),
        "depth": tree.depth,
        "training_accuracy": tree.training_accuracy,
        "features": features,
        "nodes": nodes,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def deserialize(text: str) -> DecisionTree:
    """Parse a tree document; unknown fields and version mismatches are rejected."""
    if not text.strip():
        raise SchemaError("empty tree document")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed tree document: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("tree document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown tree document fields: {sorted(unknown)}")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise SchemaError(f"tree document missing fields: {sorted(missing)}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema_version {doc['schema_version']!r} (expected {SCHEMA_VERSION})"
        )
    spec = _spec_from_doc(doc["features"])
    node_docs: dict[int, dict] = {}
    if not isinstance(doc["nodes"], list) or not doc["nodes"]:
        raise SchemaError("tree document has no nodes")
    for nd in doc["nodes"]:
        if not isinstance(nd, dict) or "id" not in nd or "kind" not in nd:
            raise SchemaError("every node needs 'id' and 'kind'")
        allowed = _LEAF_KEYS if nd["kind"] == "leaf" else _SPLIT_KEYS
        if nd["kind"] not in ("leaf", "split"):
            raise SchemaError(f"unknown node kind {nd['kind']!r}")
        unknown = set(nd) - allowed
        if unknown:
            raise SchemaError(f"unknown node fields: {sorted(unknown)}")
        if set(nd) != allowed:
            raise SchemaError(f"node {nd['id']} missing fields: {sorted(allowed - set(nd))}")
        if nd["id"] in node_docs:
            raise SchemaError(f"duplicate node id {nd['id']}")
        node_docs[nd["id"]] = nd

    root_id = doc["nodes"][0]["id"]
    seen: set[int] = set()

    def build(node_id: int) -> TreeNode:
        if node_id not in node_docs:
            raise SchemaError(f"branch references unknown node id {node_id}")
        if node_id in seen:
            raise SchemaError(f"node id {node_id} referenced more than once")
        seen.add(node_id)
        nd = node_docs[node_id]
        if nd["kind"] == "leaf":
            return Leaf(
                node_id=node_id,
                label=RiskLabel.parse(nd["label"]),
                probability=float(nd["probability"]),
                confidence=float(nd["confidence"]),
                support=int(nd["support"]),
                parent_support=int(nd["parent_support"]),
                unsupported=bool(nd["unsupported"]),
            )
        branches = {
            value: build(child_id) for value, child_id in sorted(nd["branches"].items())
        }
        feature = nd["feature"]
        declared = set(spec.labels_for(feature))
        if set(branches) != declared:
            raise SchemaError(
                f"split on {feature!r} must branch on exactly {sorted(declared)}"
            )
        return Split(node_id=node_id, feature=feature, branches=branches,
                     support=int(nd["support"]))

    root = build(root_id)
    if seen != set(node_docs):
        raise SchemaError("tree document contains unreachable nodes")
    cohort = None
    if doc["cohort"] is not None:
        cd = doc["cohort"]
        if not isinstance(cd, dict) or set(cd) != _COHORT_KEYS:
            raise SchemaError("cohort must have exactly age_min, age_max, gender")
        cohort = Cohort(int(cd["age_min"]), int(cd["age_max"]), cd["gender"])
    tree = DecisionTree(
        root=root,
        depth=int(doc["depth"]),
        spec=spec,
        cohort=cohort,
        training_accuracy=(
            float(doc["training_accuracy"]) if doc["training_accuracy"] is not None else None
        ),
    )
    if tree.depth != tree_depth(root):
        raise SchemaError("declared depth does not match the node structure")
    return tree


def _spec_from_doc(features_doc: object) -> CategorySpec:
    if not isinstance(features_doc, list) or not features_doc:
        raise SchemaError("tree document needs a non-empty 'features' list")
    order: list[str] = []
    binned: dict[str, tuple[Bin, ...]] = {}
    categorical: dict[str, tuple[str, ...]] = {}
    numeric: dict[str, tuple[float, float]] = {}
    for entry in features_doc:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise SchemaError("feature entries need 'name' and 'kind'")
        unknown = set(entry) - _FEATURE_KEYS
        if unknown:
            raise SchemaError(f"unknown feature entry fields: {sorted(unknown)}")
        name = entry["name"]
        order.append(name)
        if entry["kind"] == "binned":
            binned[name] = tuple(
                Bin(label=b["label"], lower=float(b["lower"]), upper=float(b["upper"]))
                for b in entry["bins"]
            )
        elif entry["kind"] == "categorical":
            categorical[name] = tuple(entry["values"])
        elif entry["kind"] == "numeric":
            lo, hi = entry["range"]
            numeric[name] = (float(lo), float(hi))
        else:
            raise SchemaError(f"unknown feature kind {entry['kind']!r}")
    return CategorySpec(tuple(order), binned, categorical, numeric)
