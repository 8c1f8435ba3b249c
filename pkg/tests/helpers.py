"""Independent oracles and builders shared across the test suite.

Everything here deliberately re-derives results through a different code
path than the implementation under test: entropy/gain by direct counting,
Shapley values through the permutation form, Wilcoxon p-values by naive
sign-assignment enumeration, and record routing by per-record walks.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter
from typing import Mapping, Sequence

from treetalk.dataset import (
    CategorySpec,
    PatientRecord,
    RecordSet,
    RiskLabel,
)
from treetalk.tree import DecisionTree, Leaf, Split, TreeNode, iter_nodes


def make_records(
    spec: CategorySpec, rows: Sequence[tuple[str, Mapping[str, str | float], RiskLabel | None]]
) -> RecordSet:
    return RecordSet(
        tuple(PatientRecord(id=r_id, features=dict(f), label=label) for r_id, f, label in rows),
        spec,
    )


def oracle_entropy(labels: Sequence[RiskLabel]) -> float:
    counts = Counter(labels)
    total = len(labels)
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


def oracle_gain(records: Sequence[PatientRecord], feature: str) -> float:
    labels = [r.label for r in records]
    h = oracle_entropy(labels)
    groups: dict[object, list[RiskLabel]] = {}
    for r in records:
        groups.setdefault(r.features[feature], []).append(r.label)
    for group in groups.values():
        h -= len(group) / len(records) * oracle_entropy(group)
    return h


def route_record(node: TreeNode, record: PatientRecord) -> Leaf:
    while isinstance(node, Split):
        node = node.branches[record.features[node.feature]]
    return node


def records_per_node(tree: DecisionTree, records: Sequence[PatientRecord]) -> dict[int, list]:
    """node_id -> records reaching that node, by per-record walking."""
    table: dict[int, list] = {n.node_id: [] for n in iter_nodes(tree.root)}
    for record in records:
        node = tree.root
        table[node.node_id].append(record)
        while isinstance(node, Split):
            node = node.branches[record.features[node.feature]]
            table[node.node_id].append(record)
    return table


def path_depths(node: TreeNode, depth: int = 0) -> list[int]:
    if isinstance(node, Leaf):
        return [depth]
    out: list[int] = []
    for child in node.branches.values():
        out.extend(path_depths(child, depth + 1))
    return out


def path_features_unique(node: TreeNode, seen: frozenset[str] = frozenset()) -> bool:
    if isinstance(node, Leaf):
        return True
    if node.feature in seen:
        return False
    return all(
        path_features_unique(child, seen | {node.feature}) for child in node.branches.values()
    )


def random_tree(
    rng: random.Random,
    spec: CategorySpec,
    features: Sequence[str],
    max_depth: int,
    split_probability: float = 0.7,
) -> DecisionTree:
    """A random structural tree (labels and stats arbitrary but valid)."""
    counter = itertools.count()

    def grow(available: list[str], depth: int) -> TreeNode:
        node_id = next(counter)
        if depth >= max_depth or not available or rng.random() > split_probability:
            return Leaf(
                node_id=node_id,
                label=rng.choice((RiskLabel.HIGH, RiskLabel.LOW)),
                probability=round(rng.random(), 3),
                confidence=round(rng.random(), 3),
                support=rng.randrange(1, 50),
                parent_support=50,
            )
        feature = rng.choice(available)
        remaining = [f for f in available if f != feature]
        branches = {
            value: grow(remaining, depth + 1)
            for value in sorted(spec.labels_for(feature))
        }
        return Split(node_id=node_id, feature=feature, branches=branches, support=50)

    root = grow(list(features), 0)
    from treetalk.tree import tree_depth

    return DecisionTree(root=root, depth=tree_depth(root), spec=spec)


def random_record(rng: random.Random, spec: CategorySpec, record_id: str) -> PatientRecord:
    features: dict[str, str | float] = {}
    for name in spec.features:
        if spec.is_numeric(name):
            lo, hi = spec.numeric[name]
            features[name] = float(rng.randint(int(lo), int(hi)))
        else:
            features[name] = rng.choice(spec.labels_for(name))
    return PatientRecord(id=record_id, features=features)


def random_record_set(
    rng: random.Random, spec: CategorySpec, n: int, prefix: str = "b"
) -> RecordSet:
    return RecordSet(
        tuple(random_record(rng, spec, f"{prefix}{i}") for i in range(n)), spec
    )


def oracle_shapley_permutation(
    n: int, value_of: Mapping[int, float] | Sequence[float]
) -> list[float]:
    """Shapley values via averaging marginal contributions over all n! orders."""
    totals = [0.0] * n
    count = 0
    for perm in itertools.permutations(range(n)):
        mask = 0
        for player in perm:
            before = value_of[mask]
            mask |= 1 << player
            totals[player] += value_of[mask] - before
        count += 1
    return [t / count for t in totals]


def oracle_wilcoxon_exact(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Naive exact two-sided Wilcoxon: enumerate every sign assignment."""
    diffs = [a - b for a, b in zip(x, y) if a != b]
    if not diffs:
        return 0.0, 1.0
    m = len(diffs)
    magnitudes = [abs(d) for d in diffs]
    order = sorted(range(m), key=lambda i: magnitudes[i])
    ranks = [0.0] * m
    i = 0
    while i < m:
        j = i
        while j + 1 < m and magnitudes[order[j + 1]] == magnitudes[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    observed = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_values = []
    for signs in itertools.product((0, 1), repeat=m):
        w_values.append(sum(r for r, s in zip(ranks, signs) if s))
    count_le = sum(1 for w in w_values if w <= observed)
    count_ge = sum(1 for w in w_values if w >= observed)
    p = min(1.0, 2 * min(count_le, count_ge) / len(w_values))
    statistic = min(observed, sum(ranks) - observed)
    return statistic, p


def best_label_agreement(
    planted: Mapping[str, int], found: Mapping[str, int], k: int
) -> float:
    """Max agreement over all relabelings of the found clusters."""
    participants = sorted(planted)
    best = 0
    for perm in itertools.permutations(range(k)):
        hits = sum(1 for p in participants if perm[found[p]] == planted[p])
        best = max(best, hits)
    return best / len(participants)
