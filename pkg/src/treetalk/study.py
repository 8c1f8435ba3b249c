"""Study configuration and scenario assembly.

A study config names the five scenarios (cohort or imported tree, patient,
explanation kind), the data source (synthetic generator or a records file),
and the shared configs (category spec, expectation map, verbal scale).
`build_study` turns it into served scenario bundles: fitted trees,
explanation texts, and the server-side correct selections.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .analytics import SCENARIOS, FeatureSelection
from .attribution import AttributionVector, shapley
from .dataset import (
    CategorySpec,
    GroundTruthRule,
    PatientRecord,
    RecordSet,
    RiskLabel,
    default_category_spec,
    filter_cohort,
    generate_synthetic,
    load_category_spec,
    load_records,
    make_record,
)
from .errors import SchemaError, ValidationError
from .explain import (
    ExpectationMap,
    ExplanationIR,
    ExplanationKind,
    build_global_ir,
    build_local_ir,
    build_shap_ir,
    correct_importance,
    default_expectation_map,
    load_expectation_map,
)
from .narrate import VerbalScale, default_verbal_scale, load_verbal_scale, realize
from .service.core import ScenarioBundle
from .tree import Cohort, DecisionTree, deserialize, fit_greedy, predict


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    noise: float = 0.0
    rules: tuple[GroundTruthRule, ...] = ()
    weights: Mapping[str, Mapping[str, float]] | None = None
    default_label: RiskLabel = RiskLabel.LOW


@dataclass(frozen=True)
class ScenarioDef:
    scenario: str
    kind: ExplanationKind
    cohort: Cohort | None = None
    tree_path: str | None = None
    patient: Mapping[str, object] | None = None  # inline values; None = auto-pick

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario id {self.scenario!r}")
        if self.cohort is None and self.tree_path is None:
            raise ValidationError(
                f"scenario {self.scenario!r} needs either a cohort or a tree document"
            )


@dataclass(frozen=True)
class StudyConfig:
    seed: int
    spec: CategorySpec
    expectation_map: ExpectationMap
    verbal_scale: VerbalScale
    display_features: tuple[str, ...]
    scenarios: tuple[ScenarioDef, ...]
    synthetic: SyntheticConfig | None = None
    records_path: str | None = None
    max_depth: int = 4
    min_leaf_support: int = 5
    alpha: float = 0.01
    randomize_order: bool = False

    def __post_init__(self) -> None:
        if len(self.scenarios) != len(SCENARIOS):
            raise ValidationError(f"a study needs exactly {len(SCENARIOS)} scenarios")
        ids = [s.scenario for s in self.scenarios]
        if set(ids) != set(SCENARIOS) or len(ids) != len(set(ids)):
            raise ValidationError(f"scenario ids must be exactly {list(SCENARIOS)}")
        unknown = [f for f in self.display_features if f not in self.spec.features]
        if unknown:
            raise ValidationError(f"display features not in the schema: {unknown}")
        if self.synthetic is None and self.records_path is None:
            raise ValidationError("study needs a synthetic section or a records path")


@dataclass(frozen=True)
class ScenarioArtifacts:
    definition: ScenarioDef
    tree: DecisionTree
    cohort_records: RecordSet
    patient: PatientRecord
    ir: ExplanationIR
    attribution: AttributionVector | None
    text: str
    correct: FeatureSelection


@dataclass(frozen=True)
class Study:
    config: StudyConfig
    records: RecordSet
    scenarios: Mapping[str, ScenarioArtifacts]
    bundles: tuple[ScenarioBundle, ...]

    @property
    def correct(self) -> dict[str, FeatureSelection]:
        return {name: art.correct for name, art in self.scenarios.items()}


def format_display_value(value: str | float) -> str:
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else f"{value:g}"
    return str(value)


def _patient_card(
    record: PatientRecord, display_features: Sequence[str]
) -> tuple[tuple[str, str], ...]:
    return tuple(
        (name, format_display_value(record.features[name])) for name in display_features
    )


def _auto_patient(tree: DecisionTree, cohort_records: RecordSet, scenario: str) -> PatientRecord:
    for record in cohort_records.records:
        if predict(tree, record)[0] is RiskLabel.HIGH:
            return record
    raise ValidationError(
        f"scenario {scenario!r}: no cohort record routes to a high-risk leaf; "
        "set an explicit patient in the study config"
    )


def build_study(config: StudyConfig) -> Study:
    """Materialize a study: data, trees, explanations, bundles."""
    if config.synthetic is not None:
        records = generate_synthetic(
            config.seed,
            config.synthetic.n,
            config.spec,
            config.synthetic.rules,
            noise=config.synthetic.noise,
            default_label=config.synthetic.default_label,
            weights=config.synthetic.weights,
        )
    else:
        assert config.records_path is not None
        records = load_records(config.records_path, config.spec).records

    tree_cache: dict[object, tuple[DecisionTree, RecordSet]] = {}

    def tree_for(defn: ScenarioDef) -> tuple[DecisionTree, RecordSet]:
        if defn.tree_path is not None:
            key: object = ("path", defn.tree_path)
            if key not in tree_cache:
                tree = deserialize(Path(defn.tree_path).read_text(encoding="utf-8"))
                cohort_records = (
                    filter_cohort(records, (tree.cohort.age_min, tree.cohort.age_max),
                                  tree.cohort.gender)
                    if tree.cohort
                    else records
                )
                tree_cache[key] = (tree, cohort_records)
            return tree_cache[key]
        cohort = defn.cohort
        assert cohort is not None
        key = ("cohort", cohort.age_min, cohort.age_max, cohort.gender)
        if key not in tree_cache:
            cohort_records = filter_cohort(
                records, (cohort.age_min, cohort.age_max), cohort.gender
            )
            if not cohort_records.records:
                raise ValidationError(
                    f"scenario {defn.scenario!r}: cohort {cohort.describe()} is empty"
                )
            tree = fit_greedy(cohort_records, config.max_depth, config.min_leaf_support)
            tree_cache[key] = (replace(tree, cohort=cohort), cohort_records)
        return tree_cache[key]

    artifacts: dict[str, ScenarioArtifacts] = {}
    bundles: list[ScenarioBundle] = []
    order = {defn.scenario: i for i, defn in enumerate(config.scenarios)}
    for defn in config.scenarios:
        tree, cohort_records = tree_for(defn)
        if defn.patient is not None:
            patient = make_record("patient", defn.patient, config.spec)
        else:
            patient = _auto_patient(tree, cohort_records, defn.scenario)
        attribution = None
        if defn.kind is ExplanationKind.SHAP_LIST:
            attribution = shapley(tree, patient, cohort_records)
            ir = build_shap_ir(patient, attribution)
        elif defn.kind is ExplanationKind.LOCAL_TREE:
            ir = build_local_ir(tree, patient, config.expectation_map)
        else:
            ir = build_global_ir(tree, patient, config.expectation_map)
        text = realize(ir, config.verbal_scale)
        correct = correct_importance(
            ir, tree, attribution, display_features=config.display_features
        )
        artifacts[defn.scenario] = ScenarioArtifacts(
            definition=defn,
            tree=tree,
            cohort_records=cohort_records,
            patient=patient,
            ir=ir,
            attribution=attribution,
            text=text,
            correct=correct,
        )
        bundles.append(
            ScenarioBundle(
                scenario=defn.scenario,
                order_index=order[defn.scenario],
                patient_card=_patient_card(patient, config.display_features),
                prediction=predict(tree, patient)[0],
                explanation_text=text,
                correct=correct,
            )
        )
    return Study(config=config, records=records, scenarios=artifacts, bundles=tuple(bundles))


# --- config loading ----------------------------------------------------------

_TOP_KEYS = {
    "seed", "category_spec", "expectation_map", "verbal_scale", "display_features",
    "scenarios", "synthetic", "records", "fit", "alpha", "randomize_order",
}
_SCENARIO_KEYS = {"id", "kind", "cohort", "tree", "patient"}
_SYNTH_KEYS = {"n", "noise", "rules", "weights", "default_label"}
_KINDS = {k.value: k for k in ExplanationKind}


def _resolve(value: object, loader, default_loader, base: Path):
    if value in (None, "builtin"):
        return default_loader()
    return loader(_resolve_path(str(value), base))


def _resolve_path(value: str, base: Path) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_study_config(path: str | Path) -> StudyConfig:
    """Load a StudyConfig from YAML (see docs/config_formats.md).

    Relative paths inside the config resolve against the config file's
    directory.
    """
    path = Path(path)
    base = path.parent
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: study config must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown study config keys {sorted(unknown)}")
    spec = _resolve(doc.get("category_spec"), load_category_spec, default_category_spec, base)
    em = _resolve(doc.get("expectation_map"), load_expectation_map,
                  default_expectation_map, base)
    scale = _resolve(doc.get("verbal_scale"), load_verbal_scale, default_verbal_scale, base)
    display = doc.get("display_features")
    if not isinstance(display, list) or not display:
        raise SchemaError(f"{path}: 'display_features' must be a non-empty list")

    synthetic = None
    if "synthetic" in doc:
        synth_doc = doc["synthetic"]
        if not isinstance(synth_doc, dict) or "n" not in synth_doc:
            raise SchemaError(f"{path}: 'synthetic' needs at least 'n'")
        unknown = set(synth_doc) - _SYNTH_KEYS
        if unknown:
            raise SchemaError(f"{path}: unknown synthetic keys {sorted(unknown)}")
        rules = []
        for rule_doc in synth_doc.get("rules", []):
            if not isinstance(rule_doc, dict) or set(rule_doc) != {"when", "label"}:
                raise SchemaError(f"{path}: each rule needs exactly 'when' and 'label'")
            rules.append(
                GroundTruthRule(
                    conditions={str(k): str(v) for k, v in rule_doc["when"].items()},
                    label=RiskLabel.parse(str(rule_doc["label"])),
                )
            )
        synthetic = SyntheticConfig(
            n=int(synth_doc["n"]),
            noise=float(synth_doc.get("noise", 0.0)),
            rules=tuple(rules),
            weights=synth_doc.get("weights"),
            default_label=RiskLabel.parse(str(synth_doc.get("default_label", "LowRisk"))),
        )

    scenarios = []
    for s_doc in doc.get("scenarios", []):
        if not isinstance(s_doc, dict) or "id" not in s_doc or "kind" not in s_doc:
            raise SchemaError(f"{path}: each scenario needs 'id' and 'kind'")
        unknown = set(s_doc) - _SCENARIO_KEYS
        if unknown:
            raise SchemaError(f"{path}: unknown scenario keys {sorted(unknown)}")
        kind = _KINDS.get(str(s_doc["kind"]))
        if kind is None:
            raise SchemaError(f"{path}: scenario kind must be one of {sorted(_KINDS)}")
        cohort = None
        if "cohort" in s_doc:
            c_doc = s_doc["cohort"]
            if not isinstance(c_doc, dict) or not {"age_min", "age_max"} <= set(c_doc):
                raise SchemaError(f"{path}: cohort needs age_min and age_max")
            cohort = Cohort(
                age_min=int(c_doc["age_min"]),
                age_max=int(c_doc["age_max"]),
                gender=c_doc.get("gender"),
            )
        tree_path = s_doc.get("tree")
        scenarios.append(
            ScenarioDef(
                scenario=str(s_doc["id"]),
                kind=kind,
                cohort=cohort,
                tree_path=str(_resolve_path(tree_path, base)) if tree_path else None,
                patient=s_doc.get("patient"),
            )
        )

    fit_doc = doc.get("fit", {})
    if not isinstance(fit_doc, dict) or not set(fit_doc) <= {"max_depth", "min_leaf_support"}:
        raise SchemaError(f"{path}: 'fit' takes max_depth and min_leaf_support")
    records_path = doc.get("records")
    return StudyConfig(
        seed=int(doc.get("seed", 0)),
        spec=spec,
        expectation_map=em,
        verbal_scale=scale,
        display_features=tuple(str(f) for f in display),
        scenarios=tuple(scenarios),
        synthetic=synthetic,
        records_path=str(_resolve_path(str(records_path), base)) if records_path else None,
        max_depth=int(fit_doc.get("max_depth", 4)),
        min_leaf_support=int(fit_doc.get("min_leaf_support", 5)),
        alpha=float(doc.get("alpha", 0.01)),
        randomize_order=bool(doc.get("randomize_order", False)),
    )


def default_study_config() -> StudyConfig:
    """The packaged synthetic demo study (four age/gender cohorts)."""
    ref = resources.files("treetalk") / "configs" / "study_demo.yaml"
    with resources.as_file(ref) as path:
        return load_study_config(path)
