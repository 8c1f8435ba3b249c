"""Categorical patient data: schema, ingestion, cohort filtering, synthesis.

A :class:`CategorySpec` declares, per feature, either an ordered set of
value bins (numbers are mapped onto category labels), a fixed label set
(categorical pass-through), or a numeric range (numeric pass-through).
Records are validated against the active spec on construction, so every
downstream module can assume schema-conforming data.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .errors import CategorizationError, SchemaError, ValidationError

ID_COLUMN = "id"
LABEL_COLUMN = "CHD"


class RiskLabel(Enum):
    HIGH = "HighRisk"
    LOW = "LowRisk"

    @classmethod
    def parse(cls, text: str) -> "RiskLabel":
        for member in cls:
            if member.value == text:
                return member
        raise ValidationError(f"unknown risk label {text!r}")


@dataclass(frozen=True)
class Bin:
    """One category interval: [lower, upper), upper closed on the topmost bin."""

    label: str
    lower: float
    upper: float


@dataclass(frozen=True)
class CategorySpec:
    """Declarative feature schema: bins, pass-through labels, numeric ranges."""

    features: tuple[str, ...]
    binned: Mapping[str, tuple[Bin, ...]]
    categorical: Mapping[str, tuple[str, ...]]
    numeric: Mapping[str, tuple[float, float]]

    def __post_init__(self) -> None:
        declared = set(self.binned) | set(self.categorical) | set(self.numeric)
        if len(self.features) != len(set(self.features)):
            raise SchemaError("duplicate feature names in spec")
        if declared != set(self.features):
            missing = set(self.features) - declared
            extra = declared - set(self.features)
            raise SchemaError(
                f"spec feature lists inconsistent (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        overlap = (
            (set(self.binned) & set(self.categorical))
            | (set(self.binned) & set(self.numeric))
            | (set(self.categorical) & set(self.numeric))
        )
        if overlap:
            raise SchemaError(f"features declared with more than one kind: {sorted(overlap)}")
        for name, bins in self.binned.items():
            if not bins:
                raise SchemaError(f"feature {name!r} has no bins")
            labels = [b.label for b in bins]
            if len(labels) != len(set(labels)) or any(not l for l in labels):
                raise SchemaError(f"feature {name!r} has duplicate or empty bin labels")
            for i, b in enumerate(bins):
                if not b.lower < b.upper:
                    raise SchemaError(f"feature {name!r} bin {b.label!r} is empty or inverted")
                if i and bins[i - 1].upper != b.lower:
                    raise SchemaError(
                        f"feature {name!r} bins must be contiguous and ordered by lower bound"
                    )
        for name, values in self.categorical.items():
            if not values or len(values) != len(set(values)):
                raise SchemaError(f"feature {name!r} has empty or duplicate value set")
        for name, (lo, hi) in self.numeric.items():
            if not lo < hi:
                raise SchemaError(f"feature {name!r} has an empty numeric range")

    @property
    def categorical_features(self) -> tuple[str, ...]:
        """Features carrying category labels (binned or pass-through), in schema order."""
        return tuple(f for f in self.features if f not in self.numeric)

    def labels_for(self, feature: str) -> tuple[str, ...]:
        if feature in self.binned:
            return tuple(b.label for b in self.binned[feature])
        if feature in self.categorical:
            return self.categorical[feature]
        raise ValidationError(f"feature {feature!r} is numeric; it has no label set")

    def is_numeric(self, feature: str) -> bool:
        return feature in self.numeric


def categorize(value: float, feature: str, spec: CategorySpec) -> str:
    """Map a numeric value onto its category label.

    Bins are closed below and open above, except the topmost bin which is
    closed at both ends. Exactly one bin matches any in-range value.
    """
    if feature not in spec.binned:
        raise ValidationError(f"unknown or non-binned feature {feature!r}")
    bins = spec.binned[feature]
    last = len(bins) - 1
    for i, b in enumerate(bins):
        if b.lower <= value < b.upper or (i == last and value == b.upper):
            return b.label
    raise CategorizationError(
        f"value {value!r} outside declared range [{bins[0].lower}, {bins[last].upper}] "
        f"for feature {feature!r}"
    )


@dataclass(frozen=True)
class PatientRecord:
    """One subject: categorical feature values plus an optional observed label."""

    id: str
    features: Mapping[str, str | float]
    label: RiskLabel | None = None


@dataclass(frozen=True)
class RecordSet:
    """An ordered collection of records sharing one feature schema."""

    records: tuple[PatientRecord, ...]
    spec: CategorySpec
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        if len(ids) != len(set(ids)):
            raise ValidationError("record ids are not unique")
        expected = set(self.spec.features)
        for r in self.records:
            if set(r.features) != expected:
                raise SchemaError(
                    f"record {r.id!r} does not match the spec schema "
                    f"(got {sorted(r.features)})"
                )
            for name, value in r.features.items():
                if self.spec.is_numeric(name):
                    if not isinstance(value, float):
                        raise SchemaError(
                            f"record {r.id!r}: feature {name!r} must be numeric, got {value!r}"
                        )
                elif value not in self.spec.labels_for(name):
                    raise SchemaError(
                        f"record {r.id!r}: {value!r} is not a declared category of {name!r}"
                    )

    def __len__(self) -> int:
        return len(self.records)


def make_record(
    record_id: str,
    values: Mapping[str, object],
    spec: CategorySpec,
    label: RiskLabel | None = None,
) -> PatientRecord:
    """Build a validated record, categorizing raw numbers in binned columns.

    Binned features accept either a number (categorized here) or an exact
    category label; numeric pass-throughs are coerced to float.
    """
    features: dict[str, str | float] = {}
    for name in spec.features:
        if name not in values:
            raise SchemaError(f"record {record_id!r} is missing feature {name!r}")
        raw = values[name]
        if spec.is_numeric(name):
            try:
                features[name] = float(raw)  # type: ignore[arg-type]
            except (TypeError, ValueError):
                raise SchemaError(
                    f"record {record_id!r}: non-numeric value {raw!r} in numeric column {name!r}"
                ) from None
        elif name in spec.binned and isinstance(raw, (int, float)) and not isinstance(raw, bool):
            features[name] = categorize(float(raw), name, spec)
        else:
            features[name] = str(raw)
    return PatientRecord(id=record_id, features=features, label=label)


@dataclass(frozen=True)
class DropReport:
    """Accounting for rows dropped during ingestion (missing required values)."""

    total_rows: int
    kept: int
    dropped: int
    dropped_rows: tuple[tuple[int, str], ...]
    precategorized_columns: frozenset[str] = frozenset()

    def summary(self) -> str:
        return f"rows={self.total_rows} kept={self.kept} dropped={self.dropped}"


@dataclass(frozen=True)
class LoadResult:
    records: RecordSet
    report: DropReport


def load_records(path: str | Path, spec: CategorySpec) -> LoadResult:
    """Load a delimited table (comma-separated, header row) into a RecordSet.

    Rows with any missing feature value are dropped and counted in the
    report. Binned columns may carry raw numbers (categorized on ingest) or
    already-valid category labels (kept as-is, and flagged in the report so
    callers can reject pre-categorized input where that matters).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_records(fh, spec)


def _parse_records(fh: Iterable[str], spec: CategorySpec) -> LoadResult:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise SchemaError("input table is empty (no header row)")
    header = [h.strip() for h in header]
    missing_cols = [f for f in spec.features if f not in header]
    if missing_cols:
        raise SchemaError(f"header is missing spec features: {missing_cols}")
    known = set(spec.features) | {ID_COLUMN, LABEL_COLUMN}
    unknown = [h for h in header if h not in known]
    if unknown:
        raise SchemaError(f"header has undeclared columns: {unknown}")
    col = {name: header.index(name) for name in header}

    records: list[PatientRecord] = []
    drops: list[tuple[int, str]] = []
    precategorized: set[str] = set()
    total = 0
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        total += 1
        if len(row) != len(header):
            raise SchemaError(f"row {row_no}: expected {len(header)} cells, got {len(row)}")
        missing = [f for f in spec.features if not row[col[f]].strip()]
        if missing:
            drops.append((row_no, f"missing {missing[0]}"))
            continue
        values: dict[str, object] = {}
        for name in spec.features:
            cell = row[col[name]].strip()
            if spec.is_numeric(name):
                values[name] = _parse_number(cell, name, row_no)
            elif name in spec.binned:
                try:
                    values[name] = float(cell)
                except ValueError:
                    if cell in spec.labels_for(name):
                        precategorized.add(name)
                        values[name] = cell
                    else:
                        raise SchemaError(
                            f"row {row_no}: non-numeric value {cell!r} in numeric column {name!r}"
                        ) from None
            else:
                values[name] = cell
        record_id = row[col[ID_COLUMN]].strip() if ID_COLUMN in col else f"r{row_no}"
        label = None
        if LABEL_COLUMN in col and row[col[LABEL_COLUMN]].strip():
            label = RiskLabel.parse(row[col[LABEL_COLUMN]].strip())
        records.append(make_record(record_id, values, spec, label))

    report = DropReport(
        total_rows=total,
        kept=len(records),
        dropped=len(drops),
        dropped_rows=tuple(drops),
        precategorized_columns=frozenset(precategorized),
    )
    return LoadResult(records=RecordSet(tuple(records), spec), report=report)


def _parse_number(cell: str, name: str, row_no: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(
            f"row {row_no}: non-numeric value {cell!r} in numeric column {name!r}"
        ) from None


def serialize_records(rs: RecordSet) -> str:
    """Render a RecordSet as canonical CSV (bit-exact round trip via load_records)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([ID_COLUMN, *rs.spec.features, LABEL_COLUMN])
    for r in rs.records:
        row = [r.id]
        for name in rs.spec.features:
            value = r.features[name]
            row.append(repr(value) if isinstance(value, float) else str(value))
        row.append(r.label.value if r.label is not None else "")
        writer.writerow(row)
    return out.getvalue()


def save_records(rs: RecordSet, path: str | Path) -> None:
    Path(path).write_text(serialize_records(rs), encoding="utf-8")


def filter_cohort(
    rs: RecordSet,
    age_range: tuple[int, int],
    gender: str | None = None,
    *,
    age_feature: str = "Age",
    gender_feature: str = "Gender",
) -> RecordSet:
    """Keep records whose age falls in the inclusive range and gender matches.

    Original order is preserved. An empty result is not an error; it is
    returned with a warning flag set.
    """
    if age_feature not in rs.spec.features:
        raise ValidationError(f"age feature {age_feature!r} not in schema")
    if gender is not None and gender_feature not in rs.spec.features:
        raise ValidationError(f"gender feature {gender_feature!r} not in schema")
    lo, hi = age_range
    if lo > hi:
        raise ValidationError(f"age range [{lo}, {hi}] is inverted")
    kept = tuple(
        r
        for r in rs.records
        if lo <= float(r.features[age_feature]) <= hi
        and (gender is None or r.features[gender_feature] == gender)
    )
    warnings = rs.warnings
    if not kept:
        warnings = warnings + (
            f"cohort filter (age {lo}-{hi}, gender {gender or 'any'}) matched no records",
        )
    return RecordSet(kept, rs.spec, warnings)


@dataclass(frozen=True)
class GroundTruthRule:
    """A conjunction of category conditions implying a label, for synthesis."""

    conditions: Mapping[str, str]
    label: RiskLabel

    def matches(self, features: Mapping[str, str | float]) -> bool:
        return all(features.get(f) == v for f, v in self.conditions.items())


def _check_rules(rules: Sequence[GroundTruthRule], spec: CategorySpec) -> None:
    for rule in rules:
        for feature, value in rule.conditions.items():
            if feature not in spec.features:
                raise ValidationError(f"ground-truth rule references unknown feature {feature!r}")
            if spec.is_numeric(feature):
                raise ValidationError(
                    f"ground-truth rule conditions must be categorical, not {feature!r}"
                )
            if value not in spec.labels_for(feature):
                raise ValidationError(
                    f"ground-truth rule value {value!r} is not a category of {feature!r}"
                )


def _rule_label(
    rules: Sequence[GroundTruthRule],
    features: Mapping[str, str | float],
    default_label: RiskLabel,
    record_id: str,
) -> RiskLabel:
    hits = [r for r in rules if r.matches(features)]
    labels = {r.label for r in hits}
    if len(labels) > 1:
        raise ValidationError(
            f"contradictory ground-truth rules: record {record_id!r} matches rules "
            f"with labels {sorted(l.value for l in labels)}"
        )
    return hits[0].label if hits else default_label


def _sample_raw(
    rng: random.Random,
    spec: CategorySpec,
    weights: Mapping[str, Mapping[str, float]] | None,
) -> dict[str, float | str]:
    """Draw one raw row: numbers for binned/numeric features, labels otherwise."""
    raw: dict[str, float | str] = {}
    for name in spec.features:
        if name in spec.binned:
            bins = spec.binned[name]
            labels = [b.label for b in bins]
            w = None
            if weights and name in weights:
                w = [weights[name].get(l, 1.0) for l in labels]
            b = rng.choices(bins, weights=w)[0]
            raw[name] = b.lower + rng.random() * (b.upper - b.lower)
        elif name in spec.categorical:
            labels = list(spec.categorical[name])
            w = None
            if weights and name in weights:
                w = [weights[name].get(l, 1.0) for l in labels]
            raw[name] = rng.choices(labels, weights=w)[0]
        else:
            lo, hi = spec.numeric[name]
            raw[name] = float(rng.randint(math.ceil(lo), math.floor(hi)))
    return raw


def _categorize_row(raw: Mapping[str, float | str], spec: CategorySpec) -> dict[str, str | float]:
    out: dict[str, str | float] = {}
    for name, value in raw.items():
        if name in spec.binned:
            out[name] = categorize(float(value), name, spec)
        else:
            out[name] = value
    return out


def generate_synthetic(
    seed: int,
    n: int,
    spec: CategorySpec,
    rules: Sequence[GroundTruthRule],
    *,
    noise: float = 0.0,
    default_label: RiskLabel = RiskLabel.LOW,
    weights: Mapping[str, Mapping[str, float]] | None = None,
) -> RecordSet:
    """Generate a labeled synthetic RecordSet, deterministic for a fixed seed.

    Labels come from the first-matching ground-truth rule (default label
    otherwise), then flip independently with probability ``noise``. The
    noise stream is seeded separately from the feature stream, so a
    noise-free run with the same seed draws identical feature values.
    """
    if n < 0:
        raise ValidationError("n must be non-negative")
    if not 0.0 <= noise <= 1.0:
        raise ValidationError("noise must be in [0, 1]")
    _check_rules(rules, spec)
    feature_rng = random.Random(f"{seed}:features")
    noise_rng = random.Random(f"{seed}:noise")
    records = []
    for i in range(n):
        raw = _sample_raw(feature_rng, spec, weights)
        features = _categorize_row(raw, spec)
        record_id = f"s{i:05d}"
        label = _rule_label(rules, features, default_label, record_id)
        if noise > 0 and noise_rng.random() < noise:
            label = RiskLabel.LOW if label is RiskLabel.HIGH else RiskLabel.HIGH
        records.append(PatientRecord(id=record_id, features=features, label=label))
    return RecordSet(tuple(records), spec)


def generate_synthetic_table(
    seed: int,
    n: int,
    spec: CategorySpec,
    rules: Sequence[GroundTruthRule],
    path: str | Path,
    *,
    noise: float = 0.0,
    missing_rows: int = 0,
    default_label: RiskLabel = RiskLabel.LOW,
    weights: Mapping[str, Mapping[str, float]] | None = None,
) -> None:
    """Write a raw (pre-categorization) CSV, optionally blanking cells.

    Draws the same rows as :func:`generate_synthetic` for the same seed;
    ``missing_rows`` distinct rows get one feature cell blanked, so loading
    the table retains exactly ``n - missing_rows`` records.
    """
    if missing_rows < 0 or missing_rows > n:
        raise ValidationError("missing_rows must be in [0, n]")
    if not 0.0 <= noise <= 1.0:
        raise ValidationError("noise must be in [0, 1]")
    _check_rules(rules, spec)
    feature_rng = random.Random(f"{seed}:features")
    noise_rng = random.Random(f"{seed}:noise")
    rows: list[list[str]] = []
    for i in range(n):
        raw = _sample_raw(feature_rng, spec, weights)
        features = _categorize_row(raw, spec)
        record_id = f"s{i:05d}"
        label = _rule_label(rules, features, default_label, record_id)
        if noise > 0 and noise_rng.random() < noise:
            label = RiskLabel.LOW if label is RiskLabel.HIGH else RiskLabel.HIGH
        cells = [record_id]
        for name in spec.features:
            value = raw[name]
            cells.append(repr(value) if isinstance(value, float) else str(value))
        cells.append(label.value)
        rows.append(cells)

    blank_rng = random.Random(f"{seed}:missing")
    for row_idx in blank_rng.sample(range(n), missing_rows):
        feature_idx = blank_rng.randrange(len(spec.features))
        rows[row_idx][1 + feature_idx] = ""

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([ID_COLUMN, *spec.features, LABEL_COLUMN])
        writer.writerows(rows)


# --- spec config loading -----------------------------------------------------

_BIN_KEYS = {"label", "upper", "upper_inclusive"}
_FEATURE_KEYS = {"name", "kind", "lower", "bins", "values", "range"}


def load_category_spec(path: str | Path) -> CategorySpec:
    """Load a CategorySpec from its YAML config format (see docs/config_formats.md)."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return category_spec_from_dict(doc, source=str(path))


def category_spec_from_dict(doc: object, *, source: str = "<config>") -> CategorySpec:
    if not isinstance(doc, dict) or "features" not in doc:
        raise SchemaError(f"{source}: expected a mapping with a 'features' list")
    extra = set(doc) - {"features"}
    if extra:
        raise SchemaError(f"{source}: unknown top-level keys {sorted(extra)}")
    order: list[str] = []
    binned: dict[str, tuple[Bin, ...]] = {}
    categorical: dict[str, tuple[str, ...]] = {}
    numeric: dict[str, tuple[float, float]] = {}
    for entry in doc["features"]:
        if not isinstance(entry, dict):
            raise SchemaError(f"{source}: feature entries must be mappings")
        unknown = set(entry) - _FEATURE_KEYS
        if unknown:
            raise SchemaError(f"{source}: unknown feature keys {sorted(unknown)}")
        name = entry.get("name")
        kind = entry.get("kind")
        if not name or not isinstance(name, str):
            raise SchemaError(f"{source}: feature entry without a name")
        order.append(name)
        if kind == "binned":
            binned[name] = _load_bins(entry, name, source)
        elif kind == "categorical":
            values = entry.get("values")
            if not isinstance(values, list) or not values:
                raise SchemaError(f"{source}: feature {name!r} needs a non-empty 'values' list")
            categorical[name] = tuple(str(v) for v in values)
        elif kind == "numeric":
            rng = entry.get("range")
            if not isinstance(rng, list) or len(rng) != 2:
                raise SchemaError(f"{source}: feature {name!r} needs 'range: [lo, hi]'")
            numeric[name] = (float(rng[0]), float(rng[1]))
        else:
            raise SchemaError(f"{source}: feature {name!r} has unknown kind {kind!r}")
    return CategorySpec(tuple(order), binned, categorical, numeric)


def _load_bins(entry: Mapping[str, object], name: str, source: str) -> tuple[Bin, ...]:
    if "lower" not in entry or not isinstance(entry.get("bins"), list) or not entry["bins"]:
        raise SchemaError(f"{source}: feature {name!r} needs 'lower' and a non-empty 'bins' list")
    lower = float(entry["lower"])  # type: ignore[arg-type]
    bins: list[Bin] = []
    for raw_bin in entry["bins"]:  # type: ignore[union-attr]
        if not isinstance(raw_bin, dict):
            raise SchemaError(f"{source}: bins of {name!r} must be mappings")
        unknown = set(raw_bin) - _BIN_KEYS
        if unknown:
            raise SchemaError(f"{source}: unknown bin keys {sorted(unknown)} on {name!r}")
        label = raw_bin.get("label")
        if not label or "upper" not in raw_bin:
            raise SchemaError(f"{source}: bins of {name!r} need 'label' and 'upper'")
        upper = float(raw_bin["upper"])
        # An inclusive printed upper bound ("Normal: <=5") becomes the next
        # representable float, keeping pure half-open matching semantics.
        if raw_bin.get("upper_inclusive"):
            upper = math.nextafter(upper, math.inf)
        bins.append(Bin(label=str(label), lower=lower, upper=upper))
        lower = upper
    return tuple(bins)


def default_category_spec() -> CategorySpec:
    """The packaged 11-feature CHD schema."""
    ref = resources.files("treetalk") / "configs" / "chd_categories.yaml"
    with resources.as_file(ref) as path:
        return load_category_spec(path)


DEFAULT_GROUND_TRUTH = (
    GroundTruthRule({"Cholesterol": "High", "Smoking": "Heavy"}, RiskLabel.HIGH),
    GroundTruthRule({"Systolic blood pressure": "High", "Diabetic": "Yes"}, RiskLabel.HIGH),
    GroundTruthRule({"Triglycerides": "High", "BMI": "Obese"}, RiskLabel.HIGH),
    GroundTruthRule({"Cholesterol HDL ratio": "High", "Smoking": "Moderate"}, RiskLabel.HIGH),
)
