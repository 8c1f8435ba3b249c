"""Exact Shapley feature attribution for a tree prediction.

The value function is interventional: v(S) is the mean prediction over the
background set with the explained record's values imposed on the features
in S. With at most 15 features all 2^N coalition values are enumerated
once, so the attribution is exact (no sampling or regression error). A
kernel-weighted least-squares mode is provided as a cross-check; on the
full coalition enumeration it reproduces the exact values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import PatientRecord, RecordSet, RiskLabel
from .errors import ValidationError
from .tree import DecisionTree, route, tested_features

MAX_EXACT_FEATURES = 15


@dataclass(frozen=True)
class AttributionVector:
    """Per-feature scores with the game's endpoints.

    Invariant: sum(scores) == prediction - baseline (efficiency), within
    floating-point tolerance.
    """

    features: tuple[str, ...]
    scores: tuple[float, ...]
    baseline: float
    prediction: float

    def score_of(self, feature: str) -> float:
        return self.scores[self.features.index(feature)]


def _prediction_value(label: RiskLabel) -> float:
    return 1.0 if label is RiskLabel.HIGH else 0.0


def _attribution_features(
    tree: DecisionTree, features: Sequence[str] | None
) -> tuple[str, ...]:
    if features is None:
        chosen = tree.spec.categorical_features
    else:
        chosen = tuple(features)
        if len(set(chosen)) != len(chosen):
            raise ValidationError("duplicate feature names in attribution list")
    missing = tested_features(tree) - set(chosen)
    if missing:
        raise ValidationError(
            f"attribution features must cover all tree-tested features; missing {sorted(missing)}"
        )
    if len(chosen) > MAX_EXACT_FEATURES:
        raise ValidationError(
            f"{len(chosen)} features exceed the exact enumeration bound of {MAX_EXACT_FEATURES}"
        )
    return chosen


def coalition_values(
    tree: DecisionTree,
    record: PatientRecord,
    background: RecordSet,
    features: Sequence[str],
) -> list[float]:
    """v(S) for every coalition bitmask over `features` (index = mask)."""
    if not background.records:
        raise ValidationError("background set must be non-empty")
    n = len(features)
    base_rows = [dict(b.features) for b in background.records]
    values = []
    for mask in range(1 << n):
        imposed = {features[i]: record.features[features[i]] for i in range(n) if mask >> i & 1}
        total = 0.0
        for row in base_rows:
            composed = {**row, **imposed}
            total += _prediction_value(route(tree.root, composed).label)
        values.append(total / len(base_rows))
    return values


def shapley(
    tree: DecisionTree,
    record: PatientRecord,
    background: RecordSet,
    features: Sequence[str] | None = None,
) -> AttributionVector:
    """Exact Shapley values by subset enumeration.

    phi_i = sum over coalitions S not containing i of
    |S|!(n-|S|-1)!/n! * (v(S + {i}) - v(S)).
    """
    chosen = _attribution_features(tree, features)
    n = len(chosen)
    values = coalition_values(tree, record, background, chosen)
    fact = [math.factorial(k) for k in range(n + 1)]
    weight = [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)]
    scores = [0.0] * n
    for mask in range(1 << n):
        size = mask.bit_count()
        for i in range(n):
            if mask >> i & 1:
                continue
            scores[i] += weight[size] * (values[mask | 1 << i] - values[mask])
    return AttributionVector(
        features=chosen,
        scores=tuple(scores),
        baseline=values[0],
        prediction=values[(1 << n) - 1],
    )


def shapley_kernel_regression(
    tree: DecisionTree,
    record: PatientRecord,
    background: RecordSet,
    features: Sequence[str] | None = None,
) -> AttributionVector:
    """Shapley values via the kernel-weighted least-squares formulation.

    Uses every proper non-empty coalition with the Shapley kernel weight
    and eliminates one feature through the efficiency constraint; with full
    enumeration this is algebraically the exact solution.
    """
    chosen = _attribution_features(tree, features)
    n = len(chosen)
    values = coalition_values(tree, record, background, chosen)
    v_empty = values[0]
    v_full = values[(1 << n) - 1]
    if n == 1:
        return AttributionVector(chosen, (v_full - v_empty,), v_empty, v_full)

    masks = [m for m in range(1, (1 << n) - 1)]
    x = np.zeros((len(masks), n))
    y = np.zeros(len(masks))
    w = np.zeros(len(masks))
    for row, mask in enumerate(masks):
        size = mask.bit_count()
        for i in range(n):
            x[row, i] = mask >> i & 1
        y[row] = values[mask] - v_empty
        w[row] = (n - 1) / (math.comb(n, size) * size * (n - size))
    # Impose efficiency by eliminating the last column.
    delta = v_full - v_empty
    y_adj = y - x[:, -1] * delta
    x_adj = x[:, :-1] - x[:, [-1]]
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(x_adj * sw[:, None], y_adj * sw, rcond=None)
    scores = list(coef) + [delta - float(coef.sum())]
    return AttributionVector(chosen, tuple(float(s) for s in scores), v_empty, v_full)


def filter_positive_sorted(attribution: AttributionVector) -> list[tuple[str, float]]:
    """Strictly positive scores, descending; ties broken by feature name."""
    positive = [(f, s) for f, s in zip(attribution.features, attribution.scores) if s > 0.0]
    return sorted(positive, key=lambda item: (-item[1], item[0]))
