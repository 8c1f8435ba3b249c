"""Evaluation metrics and statistics for survey responses.

Covers the per-response measures (normalized Likert ratings, change in
mental model, error in understanding), the exact Wilcoxon signed-rank test
with Bonferroni correction, participant clustering (Lloyd k-means with
k-means++ seeding and restarts), and the report assembly used by the
`analyze` CLI subcommand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ValidationError

SCENARIOS = ("local-SHAP", "local-easy", "local-hard", "global-easy", "global-hard")
MEASURES = ("CR", "UR", "VR", "CMM", "EU")

# Comparison table rows. Each entry: (label, left group, right group);
# multi-scenario groups are averaged per participant before pairing, and
# the aggregate local-vs-global row excludes local-SHAP.
COMPARISONS: tuple[tuple[str, tuple[str, ...], tuple[str, ...]], ...] = (
    ("Local vs Global", ("local-easy", "local-hard"), ("global-easy", "global-hard")),
    ("Local Easy vs Global Easy", ("local-easy",), ("global-easy",)),
    ("Local Hard vs Global Hard", ("local-hard",), ("global-hard",)),
    ("Local Easy vs Local Hard", ("local-easy",), ("local-hard",)),
    ("Global Easy vs Global Hard", ("global-easy",), ("global-hard",)),
    ("Local SHAP vs Local Hard", ("local-SHAP",), ("local-hard",)),
    ("Local SHAP vs Local Easy", ("local-SHAP",), ("local-easy",)),
    ("Local SHAP vs Global Hard", ("local-SHAP",), ("global-hard",)),
    ("Local SHAP vs Global Easy", ("local-SHAP",), ("global-easy",)),
)


@dataclass(frozen=True)
class FeatureSelection:
    """A 0/1 importance vector over the displayed feature list."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.bits:
            raise ValidationError("feature selection must not be empty")
        if any(b not in (0, 1) for b in self.bits):
            raise ValidationError("feature selection bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)

    def hamming(self, other: "FeatureSelection") -> int:
        if len(self) != len(other):
            raise ValidationError(
                f"selection lengths differ ({len(self)} vs {len(other)})"
            )
        return sum(a != b for a, b in zip(self.bits, other.bits))

    @classmethod
    def from_features(cls, selected: Iterable[str], display: Sequence[str]) -> "FeatureSelection":
        chosen = set(selected)
        return cls(tuple(1 if f in chosen else 0 for f in display))


@dataclass(frozen=True)
class LikertRatings:
    """Raw 5-point ratings for the three explanation prompts."""

    completeness: int
    understandability: int
    verboseness: int

    def __post_init__(self) -> None:
        for name, value in (
            ("completeness", self.completeness),
            ("understandability", self.understandability),
            ("verboseness", self.verboseness),
        ):
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                raise ValidationError(f"{name} rating must be an integer in 1..5, got {value!r}")


@dataclass(frozen=True)
class SurveyResponse:
    """One participant x scenario record: selections, ratings, text, timing."""

    participant: str
    scenario: str
    before: FeatureSelection
    after: FeatureSelection
    ratings: LikertRatings
    free_text: str = ""
    dwell_seconds: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        if len(self.before) != len(self.after):
            raise ValidationError("before/after selections must have equal length")


def normalize_likert(raw: int) -> float:
    """Map a 1..5 agreement rating linearly onto [0, 1]."""
    if not isinstance(raw, int) or isinstance(raw, bool) or not 1 <= raw <= 5:
        raise ValidationError(f"Likert rating must be an integer in 1..5, got {raw!r}")
    return (raw - 1) / 4


def change_in_mental_model(before: FeatureSelection, after: FeatureSelection) -> float:
    """Normalized Hamming distance between before/after selections."""
    return before.hamming(after) / len(before)


def error_in_understanding(after: FeatureSelection, correct: FeatureSelection) -> float:
    """Normalized Hamming distance between the after-selection and the correct set."""
    return after.hamming(correct) / len(after)


def response_measures(resp: SurveyResponse, correct: FeatureSelection) -> dict[str, float]:
    return {
        "CR": normalize_likert(resp.ratings.completeness),
        "UR": normalize_likert(resp.ratings.understandability),
        "VR": normalize_likert(resp.ratings.verboseness),
        "CMM": change_in_mental_model(resp.before, resp.after),
        "EU": error_in_understanding(resp.after, correct),
    }


# --- Wilcoxon signed-rank ----------------------------------------------------

EXACT_LIMIT = 25


class WilcoxonResult(NamedTuple):
    statistic: float
    pvalue: float
    n_used: int
    degenerate: bool
    method: str


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks: Sequence[float], w_plus: float) -> float:
    # Convolve the W+ distribution over doubled ranks (exact integers).
    doubled = [round(2 * r) for r in ranks]
    total = sum(doubled)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled:
        for s in range(total - r, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
    observed = round(2 * w_plus)
    n_assignments = 1 << len(ranks)
    count_le = sum(counts[: observed + 1])
    count_ge = sum(counts[observed:])
    return min(1.0, 2 * min(count_le, count_ge) / n_assignments)


def _normal_two_sided_p(ranks: Sequence[float], w_plus: float) -> float:
    m = len(ranks)
    mean = m * (m + 1) / 4
    tie_term = 0.0
    seen: dict[float, int] = {}
    for r in ranks:
        seen[r] = seen.get(r, 0) + 1
    for t in seen.values():
        tie_term += t**3 - t
    var = m * (m + 1) * (2 * m + 1) / 24 - tie_term / 48
    if var <= 0:
        return 1.0
    # Continuity correction shrinks the deviation toward zero, never past it.
    deviation = max(abs(w_plus - mean) - 0.5, 0.0)
    z = deviation / math.sqrt(var)
    return math.erfc(z / math.sqrt(2))


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> WilcoxonResult:
    """Paired Wilcoxon signed-rank test, two-sided.

    Zero differences are dropped and ties receive average ranks. The
    p-value is exact (full sign-assignment distribution) for up to 25
    non-zero differences, and a tie-corrected normal approximation with
    continuity correction above that. All differences zero is flagged
    degenerate with p = 1.
    """
    if len(x) != len(y):
        raise ValidationError("paired samples must have equal length")
    if not x:
        raise ValidationError("paired samples must be non-empty")
    diffs = [float(a) - float(b) for a, b in zip(x, y) if float(a) != float(b)]
    if not diffs:
        return WilcoxonResult(0.0, 1.0, 0, True, "degenerate")
    ranks = _average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(ranks) - w_plus
    statistic = min(w_plus, w_minus)
    if len(diffs) <= EXACT_LIMIT:
        p = _exact_two_sided_p(ranks, w_plus)
        method = "exact"
    else:
        p = _normal_two_sided_p(ranks, w_plus)
        method = "normal"
    return WilcoxonResult(statistic, p, len(diffs), False, method)


def bonferroni(p: float, m: int, alpha: float) -> tuple[float, bool]:
    """Multiply p by the comparison count, cap at 1, compare to alpha."""
    if m < 1:
        raise ValidationError("comparison count must be >= 1")
    adjusted = min(1.0, p * m)
    return adjusted, adjusted <= alpha


# --- k-means -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KMeansResult:
    assignments: tuple[int, ...]
    centroids: np.ndarray
    wcss: float
    wcss_history: tuple[float, ...]


def _kmeans_once(pts: np.ndarray, k: int, rng: np.random.Generator,
                 max_iter: int) -> KMeansResult:
    n = len(pts)
    # k-means++ seeding.
    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    d2 = ((pts - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = pts[idx]
        d2 = np.minimum(d2, ((pts - centroids[j]) ** 2).sum(axis=1))

    assignments = np.full(n, -1)
    history: list[float] = []
    for _ in range(max_iter):
        dists = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        history.append(float(dists[np.arange(n), new_assign].sum()))
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for j in range(k):
            members = pts[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            # An empty cluster keeps its previous centroid, so the
            # objective never increases between Lloyd iterations.
    return KMeansResult(
        assignments=tuple(int(a) for a in assignments),
        centroids=centroids,
        wcss=history[-1],
        wcss_history=tuple(history),
    )


def kmeans(
    points: Sequence[Sequence[float]],
    k: int,
    seed: int,
    *,
    restarts: int = 8,
    max_iter: int = 100,
) -> KMeansResult:
    """Lloyd k-means, k-means++ seeded, best of `restarts` by WCSS.

    Deterministic for a fixed seed: restart seeds are spawned from the
    master seed, and the best restart is chosen by (WCSS, restart index).
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValidationError("points must be a non-empty 2-d array")
    if k > len(pts):
        raise ValidationError("k must not exceed the number of points")
    best: KMeansResult | None = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        result = _kmeans_once(pts, k, np.random.default_rng(child), max_iter)
        if best is None or result.wcss < best.wcss:
            best = result
    assert best is not None
    return best


def silhouette_score(points: Sequence[Sequence[float]], assignments: Sequence[int]) -> float:
    """Mean silhouette over all points; singleton clusters score 0."""
    pts = np.asarray(points, dtype=float)
    labels = np.asarray(assignments)
    if len(set(labels.tolist())) < 2:
        raise ValidationError("silhouette needs at least two clusters")
    dists = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    scores = []
    for i in range(len(pts)):
        same = labels == labels[i]
        n_same = same.sum()
        if n_same <= 1:
            scores.append(0.0)
            continue
        a = dists[i, same].sum() / (n_same - 1)
        b = min(
            dists[i, labels == other].mean()
            for other in set(labels.tolist())
            if other != labels[i]
        )
        scores.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return float(np.mean(scores))


# --- report assembly ---------------------------------------------------------


class ErrorCounts(NamedTuple):
    type_i: int
    type_ii: int


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    measure: str
    n_pairs: int
    statistic: float
    p_value: float
    p_adjusted: float
    significant: bool
    degenerate: bool


@dataclass(frozen=True)
class MeansReport:
    scenarios: Mapping[str, Mapping[str, float]]
    counts: Mapping[str, int]
    warnings: tuple[str, ...]


@dataclass(frozen=True)
class ClusterReport:
    participants: tuple[str, ...]
    assignments: Mapping[str, int]
    k: int
    wcss: float
    silhouette_by_k: Mapping[int, float]
    skipped: tuple[str, ...]


@dataclass(frozen=True)
class AnalysisReport:
    means: MeansReport
    comparisons: tuple[ComparisonRow, ...]
    alpha: float
    clusters: ClusterReport | None
    errors: Mapping[str, Mapping[str, ErrorCounts]]
    notes: tuple[str, ...]


def _by_participant(
    responses: Sequence[SurveyResponse],
) -> dict[str, dict[str, SurveyResponse]]:
    table: dict[str, dict[str, SurveyResponse]] = {}
    for r in responses:
        table.setdefault(r.participant, {})
        if r.scenario in table[r.participant]:
            raise ValidationError(
                f"duplicate response for participant {r.participant!r}, scenario {r.scenario!r}"
            )
        table[r.participant][r.scenario] = r
    return table


def _require_correct(correct: Mapping[str, FeatureSelection], scenario: str) -> FeatureSelection:
    if scenario not in correct:
        raise ValidationError(f"scenario {scenario!r} has no registered correct selection")
    return correct[scenario]


def scenario_means(
    responses: Sequence[SurveyResponse],
    correct: Mapping[str, FeatureSelection],
) -> MeansReport:
    """Per-scenario arithmetic means of CR, UR, VR, CMM, EU."""
    sums: dict[str, dict[str, float]] = {s: {m: 0.0 for m in MEASURES} for s in SCENARIOS}
    counts: dict[str, int] = {s: 0 for s in SCENARIOS}
    for r in responses:
        values = response_measures(r, _require_correct(correct, r.scenario))
        counts[r.scenario] += 1
        for m in MEASURES:
            sums[r.scenario][m] += values[m]
    means: dict[str, dict[str, float]] = {}
    warnings: list[str] = []
    for s in SCENARIOS:
        if counts[s] == 0:
            warnings.append(f"scenario {s!r} has no responses; omitted from the means report")
            continue
        means[s] = {m: sums[s][m] / counts[s] for m in MEASURES}
    return MeansReport(scenarios=means, counts={s: c for s, c in counts.items() if c},
                       warnings=tuple(warnings))


def pairwise_comparisons(
    responses: Sequence[SurveyResponse],
    correct: Mapping[str, FeatureSelection],
    *,
    alpha: float = 0.01,
) -> tuple[ComparisonRow, ...]:
    """All scenario comparisons per measure; Bonferroni m = rows per measure."""
    table = _by_participant(responses)
    values: dict[str, dict[str, dict[str, float]]] = {}
    for participant, per_scenario in table.items():
        values[participant] = {
            scenario: response_measures(resp, _require_correct(correct, scenario))
            for scenario, resp in per_scenario.items()
        }
    m_comparisons = len(COMPARISONS)
    rows: list[ComparisonRow] = []
    for measure in MEASURES:
        for label, left, right in COMPARISONS:
            xs: list[float] = []
            ys: list[float] = []
            for participant in sorted(values):
                per_scenario = values[participant]
                if any(s not in per_scenario for s in left + right):
                    continue
                xs.append(sum(per_scenario[s][measure] for s in left) / len(left))
                ys.append(sum(per_scenario[s][measure] for s in right) / len(right))
            if len(xs) < 2:
                raise ValidationError(
                    f"comparison {label!r} needs at least 2 complete participants"
                )
            result = wilcoxon_signed_rank(xs, ys)
            adjusted, significant = bonferroni(result.pvalue, m_comparisons, alpha)
            rows.append(
                ComparisonRow(
                    label=label,
                    measure=measure,
                    n_pairs=len(xs),
                    statistic=result.statistic,
                    p_value=result.pvalue,
                    p_adjusted=adjusted,
                    significant=significant,
                    degenerate=result.degenerate,
                )
            )
    return tuple(rows)


def participant_vectors(
    responses: Sequence[SurveyResponse],
    correct: Mapping[str, FeatureSelection],
) -> tuple[tuple[str, ...], np.ndarray, tuple[str, ...]]:
    """25-value vector (5 measures x 5 scenarios) per complete participant."""
    table = _by_participant(responses)
    complete: list[str] = []
    skipped: list[str] = []
    rows: list[list[float]] = []
    for participant in sorted(table):
        per_scenario = table[participant]
        if any(s not in per_scenario for s in SCENARIOS):
            skipped.append(participant)
            continue
        row: list[float] = []
        for scenario in SCENARIOS:
            values = response_measures(
                per_scenario[scenario], _require_correct(correct, scenario)
            )
            row.extend(values[m] for m in MEASURES)
        complete.append(participant)
        rows.append(row)
    return tuple(complete), np.asarray(rows, dtype=float), tuple(skipped)


def cluster_participants(
    responses: Sequence[SurveyResponse],
    correct: Mapping[str, FeatureSelection],
    *,
    k: int = 3,
    seed: int = 0,
) -> ClusterReport:
    participants, vectors, skipped = participant_vectors(responses, correct)
    if len(participants) < k:
        raise ValidationError(f"need at least {k} complete participants to cluster")
    result = kmeans(vectors, k, seed)
    silhouettes: dict[int, float] = {}
    for other_k in range(2, 7):
        if other_k > len(participants):
            break
        probe = kmeans(vectors, other_k, seed)
        if len(set(probe.assignments)) < 2:
            continue
        silhouettes[other_k] = silhouette_score(vectors, probe.assignments)
    return ClusterReport(
        participants=participants,
        assignments=dict(zip(participants, result.assignments)),
        k=k,
        wcss=result.wcss,
        silhouette_by_k=silhouettes,
        skipped=skipped,
    )


def error_breakdown(
    responses: Sequence[SurveyResponse],
    correct: Mapping[str, FeatureSelection],
    feature_names: Sequence[str],
) -> dict[str, dict[str, ErrorCounts]]:
    """Per-feature Type I (wrong selection) / Type II (missed feature) counts."""
    out: dict[str, dict[str, ErrorCounts]] = {}
    for r in responses:
        c = _require_correct(correct, r.scenario)
        if len(c) != len(feature_names) or len(r.after) != len(feature_names):
            raise ValidationError("selection length does not match the feature list")
        per_feature = out.setdefault(
            r.scenario, {f: ErrorCounts(0, 0) for f in feature_names}
        )
        for name, v_bit, c_bit in zip(feature_names, r.after.bits, c.bits):
            counts = per_feature[name]
            if v_bit == 1 and c_bit == 0:
                per_feature[name] = ErrorCounts(counts.type_i + 1, counts.type_ii)
            elif v_bit == 0 and c_bit == 1:
                per_feature[name] = ErrorCounts(counts.type_i, counts.type_ii + 1)
    return out


def low_effort_participants(
    responses: Sequence[SurveyResponse],
    *,
    min_seconds: float = 60.0,
    min_scenarios: int = 2,
) -> tuple[str, ...]:
    """Participants spending under `min_seconds` on at least `min_scenarios`."""
    counts: dict[str, int] = {}
    for r in responses:
        total = sum(r.dwell_seconds.values())
        if total < min_seconds:
            counts[r.participant] = counts.get(r.participant, 0) + 1
    return tuple(sorted(p for p, c in counts.items() if c >= min_scenarios))


def build_report(
    responses: Sequence[SurveyResponse],
    correct: Mapping[str, FeatureSelection],
    feature_names: Sequence[str],
    *,
    seed: int = 0,
    alpha: float = 0.01,
    k: int = 3,
) -> AnalysisReport:
    """Assemble the full analysis: means, pairwise tests, clusters, errors.

    With fewer than 2 participants the statistics are suppressed and only
    the means are emitted, per the CLI contract.
    """
    means = scenario_means(responses, correct)
    errors = error_breakdown(responses, correct, feature_names)
    notes = list(means.warnings)
    participants = {r.participant for r in responses}
    comparisons: tuple[ComparisonRow, ...] = ()
    clusters: ClusterReport | None = None
    if len(participants) >= 2:
        comparisons = pairwise_comparisons(responses, correct, alpha=alpha)
        try:
            clusters = cluster_participants(responses, correct, k=k, seed=seed)
        except ValidationError as exc:
            notes.append(f"clustering skipped: {exc}")
    else:
        notes.append("fewer than 2 participants: statistical tests suppressed")
    low_effort = low_effort_participants(responses)
    if low_effort:
        notes.append(f"low-effort dwell times flagged for: {', '.join(low_effort)}")
    return AnalysisReport(
        means=means,
        comparisons=comparisons,
        alpha=alpha,
        clusters=clusters,
        errors=errors,
        notes=tuple(notes),
    )


def report_to_json(report: AnalysisReport) -> str:
    doc = {
        "means": {s: dict(v) for s, v in report.means.scenarios.items()},
        "counts": dict(report.means.counts),
        "alpha": report.alpha,
        "comparisons": [
            {
                "label": row.label,
                "measure": row.measure,
                "n_pairs": row.n_pairs,
                "statistic": row.statistic,
                "p_value": row.p_value,
                "p_adjusted": row.p_adjusted,
                "significant": row.significant,
                "degenerate": row.degenerate,
            }
            for row in report.comparisons
        ],
        "clusters": (
            {
                "k": report.clusters.k,
                "assignments": dict(report.clusters.assignments),
                "wcss": report.clusters.wcss,
                "silhouette_by_k": {
                    str(k): v for k, v in report.clusters.silhouette_by_k.items()
                },
                "skipped": list(report.clusters.skipped),
            }
            if report.clusters
            else None
        ),
        "errors": {
            scenario: {
                feature: {"type_i": c.type_i, "type_ii": c.type_ii}
                for feature, c in per_feature.items()
            }
            for scenario, per_feature in report.errors.items()
        },
        "notes": list(report.notes),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_report_text(report: AnalysisReport) -> str:
    """Human-readable tables: scenario means, comparisons, error counts."""
    lines: list[str] = []
    lines.append("Evaluation parameters across scenarios")
    header = ["measure"] + [s for s in SCENARIOS if s in report.means.scenarios]
    lines.append("  " + " | ".join(f"{h:>12}" for h in header))
    for m in MEASURES:
        cells = [f"{m:>12}"]
        for s in SCENARIOS:
            if s in report.means.scenarios:
                cells.append(f"{report.means.scenarios[s][m]:>12.3f}")
        lines.append("  " + " | ".join(cells))
    if report.comparisons:
        lines.append("")
        lines.append(f"Pairwise Wilcoxon tests (Bonferroni-adjusted, alpha={report.alpha})")
        lines.append("  " + " | ".join(
            [f"{'comparison':<28}"] + [f"{m:>8}" for m in MEASURES]
        ))
        labels = [c[0] for c in COMPARISONS]
        by_key = {(row.label, row.measure): row for row in report.comparisons}
        for label in labels:
            cells = [f"{label:<28}"]
            for m in MEASURES:
                row = by_key[(label, m)]
                mark = "*" if row.significant else " "
                cells.append(f"{row.p_adjusted:>7.3f}{mark}")
            lines.append("  " + " | ".join(cells))
    if report.clusters:
        lines.append("")
        sizes: dict[int, int] = {}
        for group in report.clusters.assignments.values():
            sizes[group] = sizes.get(group, 0) + 1
        lines.append(
            f"Clusters (k={report.clusters.k}): sizes "
            + ", ".join(f"group {g}: {n}" for g, n in sorted(sizes.items()))
        )
        sil = ", ".join(
            f"k={k}: {v:.3f}" for k, v in sorted(report.clusters.silhouette_by_k.items())
        )
        if sil:
            lines.append(f"Silhouette by k: {sil}")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"
