"""Acceptance suite: one test per acceptance criterion.

Each test prints an `ACCEPTANCE PASS: <criterion>` line after its
assertions; run with `pytest tests/test_acceptance.py -v -s` to see them.
Tolerances are pinned here, straight from the criteria.
"""

from __future__ import annotations

import json
import random
import time
from fractions import Fraction
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from treetalk.analytics import (
    SCENARIOS,
    FeatureSelection,
    build_report,
    change_in_mental_model,
    error_in_understanding,
    wilcoxon_signed_rank,
)
from treetalk.attribution import coalition_values, shapley
from treetalk.cli import main
from treetalk.dataset import CategorySpec, RiskLabel
from treetalk.explain import (
    ExplanationKind,
    build_global_ir,
    build_local_ir,
    build_shap_ir,
    correct_importance,
    default_expectation_map,
)
from treetalk.narrate import default_verbal_scale, realize
from treetalk.service.core import export_responses
from treetalk.service.log import ResponseLog
from treetalk.simulate import simulate_log
from treetalk.study import build_study, default_study_config
from treetalk.tree import (
    DecisionTree,
    Leaf,
    Split,
    annotate_leaves,
    iter_nodes,
    leaves,
)

from helpers import (
    best_label_agreement,
    make_records,
    oracle_shapley_permutation,
    oracle_wilcoxon_exact,
    random_record,
    random_record_set,
    random_tree,
)
from ir_fixtures import FIXTURES

GOLDEN_DIR = Path(__file__).parent / "data" / "goldens"


def report_pass(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def test_metric_formulas_match_positional_count_oracle():
    rng = random.Random(2024)
    n = 11
    started = time.monotonic()
    for _ in range(1000):
        u = FeatureSelection(tuple(rng.randint(0, 1) for _ in range(n)))
        v = FeatureSelection(tuple(rng.randint(0, 1) for _ in range(n)))
        c = FeatureSelection(tuple(rng.randint(0, 1) for _ in range(n)))
        mism_uv = 0
        mism_vc = 0
        for i in range(n):
            if u.bits[i] != v.bits[i]:
                mism_uv += 1
            if v.bits[i] != c.bits[i]:
                mism_vc += 1
        assert change_in_mental_model(u, v) == mism_uv / n
        assert error_in_understanding(v, c) == mism_vc / n
        assert change_in_mental_model(u, u) == 0.0
        assert error_in_understanding(c, c) == 0.0
    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"metric check took {elapsed:.2f}s"
    report_pass("metric formulas (1000 triples, N=11, exact, < 1 s)")


def test_leaf_annotation_matches_brute_force_routing():
    spec = CategorySpec(
        features=("F", "G"),
        binned={},
        categorical={"F": ("f0", "f1", "f2"), "G": ("g0", "g1")},
        numeric={},
    )
    tree = DecisionTree(
        root=Split(
            node_id=0,
            feature="F",
            branches={
                "f0": Leaf(1, RiskLabel.HIGH, 0.0, 0.0, 0, 0),
                "f1": Split(
                    node_id=2,
                    feature="G",
                    branches={
                        "g0": Leaf(3, RiskLabel.HIGH, 0.0, 0.0, 0, 0),
                        "g1": Leaf(4, RiskLabel.LOW, 0.0, 0.0, 0, 0),
                    },
                    support=0,
                ),
                "f2": Leaf(5, RiskLabel.LOW, 0.0, 0.0, 0, 0),
            },
            support=0,
        ),
        depth=2,
        spec=spec,
    )
    rows = []
    plan = [
        ("f0", "g0", 7, 5),   # 12 records under f0
        ("f1", "g0", 9, 1),   # 10 under f1/g0
        ("f1", "g1", 2, 6),   # 8 under f1/g1
        ("f2", "g1", 1, 9),   # 10 under f2
    ]
    i = 0
    for f, g, highs, lows in plan:
        for label, count in ((RiskLabel.HIGH, highs), (RiskLabel.LOW, lows)):
            for _ in range(count):
                rows.append((f"r{i}", {"F": f, "G": g}, label))
                i += 1
    rs = make_records(spec, rows)
    assert len(rs) == 40
    annotated = annotate_leaves(tree, rs)

    # Brute-force oracle: walk every record down the tree by hand and
    # count arrivals per node.
    arrivals: dict[int, int] = {}
    for record in rs.records:
        node = annotated.root
        arrivals[node.node_id] = arrivals.get(node.node_id, 0) + 1
        while isinstance(node, Split):
            node = node.branches[record.features[node.feature]]
            arrivals[node.node_id] = arrivals.get(node.node_id, 0) + 1

    parent_of = {}
    for node in iter_nodes(annotated.root):
        if isinstance(node, Split):
            for child in node.branches.values():
                parent_of[child.node_id] = node.node_id
    for leaf in leaves(annotated):
        parent_arrivals = (
            arrivals[parent_of[leaf.node_id]] if leaf.node_id in parent_of else len(rs)
        )
        expected = arrivals.get(leaf.node_id, 0) / parent_arrivals
        assert leaf.probability == expected, f"leaf {leaf.node_id}"
    by_id = {n.node_id: n for n in iter_nodes(annotated.root)}
    assert by_id[1].probability == 12 / 40
    assert by_id[3].probability == 10 / 18
    assert by_id[4].probability == 8 / 18
    assert by_id[5].probability == 10 / 40
    report_pass("leaf annotation (40-record fixture, exact ratios)")


def test_shapley_axioms_on_random_trees():
    spec = CategorySpec(
        features=tuple(f"A{i}" for i in range(5)),
        binned={},
        categorical={f"A{i}": ("u", "v", "w")[: 2 + i % 2] for i in range(5)},
        numeric={},
    )
    rng = random.Random(99)
    started = time.monotonic()
    for trial in range(100):
        n_tested = rng.randint(1, 3)
        tested = rng.sample(spec.features, n_tested)
        tree = random_tree(rng, spec, tested, max_depth=3)
        background = random_record_set(rng, spec, rng.randint(2, 6), prefix=f"bg{trial}-")
        record = random_record(rng, spec, f"p{trial}")
        vector = shapley(tree, record, background)
        # Efficiency within 1e-9.
        assert abs(sum(vector.scores) - (vector.prediction - vector.baseline)) < 1e-9
        # Dummy features get exactly zero.
        from treetalk.tree import tested_features

        for feature, score in zip(vector.features, vector.scores):
            if feature not in tested_features(tree):
                assert score == 0.0
        # Subset enumeration equals the permutation-form oracle within 1e-9.
        values = coalition_values(tree, record, background, vector.features)
        oracle = oracle_shapley_permutation(len(vector.features), values)
        for got, want in zip(vector.scores, oracle):
            assert abs(got - want) < 1e-9
    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"shapley check took {elapsed:.2f}s"
    report_pass("shapley axioms (100 random trees, 1e-9, < 30 s)")


def test_wilcoxon_exact_matches_full_enumeration():
    rng = random.Random(5)
    checked = 0
    for m in range(1, 11):
        for _ in range(20):
            x = [float(rng.randint(0, 5)) for _ in range(m)]
            y = [float(rng.randint(0, 5)) for _ in range(m)]
            result = wilcoxon_signed_rank(x, y)
            _, oracle_p = oracle_wilcoxon_exact(x, y)
            if result.degenerate:
                assert oracle_p == 1.0
            else:
                assert result.method == "exact"
                assert result.pvalue == oracle_p
            checked += 1
    assert checked == 200
    fixture = wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [0.0] * 6)
    assert fixture.pvalue == float(Fraction(2, 64))
    report_pass("wilcoxon exact p (m <= 10 enumeration, fixture 2/64)")


def test_narration_goldens_are_byte_identical():
    scale = default_verbal_scale()
    for name, build in sorted(FIXTURES.items()):
        ir = build()
        text = realize(ir, scale)
        golden = (GOLDEN_DIR / f"{name}.txt").read_text(encoding="utf-8")
        assert text == golden, f"golden drift in {name}"
        has_flag = any(c.contradictory for r in ir.rules for c in r.conditions)
        assert ("even if" in text) == has_flag
        if ir.kind is ExplanationKind.GLOBAL_TREE:
            confidences = [r.confidence for r in ir.rules]
            assert confidences == sorted(confidences, reverse=True)
    report_pass("narration goldens (byte-identical, even-if iff flagged, ordering)")


def test_correct_importance_rules_on_random_pairs():
    spec = CategorySpec(
        features=tuple(f"B{i}" for i in range(6)),
        binned={},
        categorical={f"B{i}": ("0", "1") for i in range(6)},
        numeric={},
    )
    em = default_expectation_map()
    rng = random.Random(31)
    display = spec.features
    for trial in range(50):
        tested = rng.sample(spec.features, rng.randint(1, 4))
        tree = random_tree(rng, spec, tested, max_depth=3, split_probability=0.85)
        record = random_record(rng, spec, f"p{trial}")
        background = random_record_set(rng, spec, 4, prefix=f"c{trial}-")

        # Local: C = decision-path features (brute-force walk).
        node = tree.root
        path_features = set()
        while isinstance(node, Split):
            path_features.add(node.feature)
            node = node.branches[record.features[node.feature]]
        local_ir = build_local_ir(
            tree, record, em, age_feature="B0", gender_feature="B1"
        )
        local_c = correct_importance(local_ir, tree, display_features=display)
        assert local_c.bits == tuple(1 if f in path_features else 0 for f in display)

        # Global: C = all features tested anywhere (brute-force scan).
        tested_scan = {
            n.feature for n in iter_nodes(tree.root) if isinstance(n, Split)
        }
        if any(l.label is RiskLabel.HIGH for l in leaves(tree)):
            global_ir = build_global_ir(
                tree, record, em, age_feature="B0", gender_feature="B1"
            )
            global_c = correct_importance(global_ir, tree, display_features=display)
            assert global_c.bits == tuple(1 if f in tested_scan else 0 for f in display)

        # SHAP: C = features with positive score (scan the raw vector).
        vector = shapley(tree, record, background)
        shap_ir = build_shap_ir(record, vector, age_feature="B0", gender_feature="B1")
        shap_c = correct_importance(
            shap_ir, tree, attribution=vector, display_features=display
        )
        positive = {f for f, s in zip(vector.features, vector.scores) if s > 0}
        assert shap_c.bits == tuple(1 if f in positive else 0 for f in display)
    report_pass("correct-importance rules (50 random tree/patient pairs)")


def test_pipeline_reproduces_paper_structure(tmp_path):
    started = time.monotonic()
    config = default_study_config()
    study = build_study(config)

    # Five scenarios over depth-bounded trees with 6-10 leaves each.
    assert len(study.bundles) == 5
    assert {b.scenario for b in study.bundles} == set(SCENARIOS)
    for art in study.scenarios.values():
        assert art.tree.depth <= 4
        assert 6 <= len(leaves(art.tree)) <= 10

    log = ResponseLog(tmp_path / "responses.jsonl")
    planted = simulate_log(study, log, participants=50, seed=0, group_sizes=(12, 22, 16))
    records, _ = log.read_all()
    assert len(records) == 500  # 50 participants x 5 scenarios x 2 pages

    ref = resources.files("treetalk") / "configs" / "study_demo.yaml"
    with resources.as_file(ref) as config_path:
        runner = CliRunner()
        out = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["analyze", "--responses", str(log.path), "--study-config", str(config_path),
             "--out", str(out)],
            catch_exceptions=False,
        )
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())

    # Means report shape: all 5 scenarios x 5 measures, values in [0, 1].
    assert set(report["means"]) == set(SCENARIOS)
    for values in report["means"].values():
        assert set(values) == {"CR", "UR", "VR", "CMM", "EU"}
        assert all(0.0 <= v <= 1.0 for v in values.values())

    # Comparison report shape: 9 rows per measure, Bonferroni at 0.01.
    assert report["alpha"] == 0.01
    labels = [row["label"] for row in report["comparisons"] if row["measure"] == "CR"]
    assert len(labels) == 9
    assert labels[0] == "Local vs Global"
    for row in report["comparisons"]:
        assert row["p_adjusted"] == pytest.approx(min(1.0, row["p_value"] * 9))
        assert row["significant"] == (row["p_adjusted"] <= 0.01)

    # Clustering recovers the planted 3-group structure.
    assert report["clusters"]["k"] == 3
    assignments = report["clusters"]["assignments"]
    assert len(assignments) == 50
    agreement = best_label_agreement(planted, assignments, 3)
    assert agreement >= 0.90, f"agreement {agreement:.2f}"

    elapsed = time.monotonic() - started
    assert elapsed < 120.0, f"pipeline took {elapsed:.1f}s"
    report_pass(
        f"pipeline reproduction (agreement {agreement:.2f}, {elapsed:.1f} s < 2 min)"
    )


def test_fixed_seed_outputs_are_byte_identical(tmp_path):
    runner = CliRunner()
    from treetalk.dataset import DEFAULT_GROUND_TRUTH, default_category_spec
    from treetalk.dataset import generate_synthetic_table

    table = tmp_path / "records.csv"
    generate_synthetic_table(7, 500, default_category_spec(), DEFAULT_GROUND_TRUTH, table)

    fit_outputs = []
    for name in ("a", "b"):
        out = tmp_path / f"tree-{name}.json"
        result = runner.invoke(
            main,
            ["fit", "--records", str(table), "--age-min", "60", "--age-max", "84",
             "--gender", "Female", "--out", str(out)],
            catch_exceptions=False,
        )
        assert result.exit_code == 0
        fit_outputs.append(out.read_bytes())
    assert fit_outputs[0] == fit_outputs[1]

    patient = tmp_path / "patient.json"
    patient.write_text(json.dumps({
        "Age": 70, "Gender": "Female", "BMI": 31.0, "Diabetic": "Yes",
        "Cholesterol": 6.0, "HDL": 0.5, "Triglycerides": 2.5,
        "Cholesterol HDL ratio": 7.0, "Systolic blood pressure": 150.0,
        "Smoking": 25.0, "Alcohol amount": 3.0,
    }))
    explain_outputs = [
        runner.invoke(
            main,
            ["explain", "--tree", str(tmp_path / "tree-a.json"), "--patient",
             str(patient), "--kind", "global"],
            catch_exceptions=False,
        ).output
        for _ in range(2)
    ]
    assert explain_outputs[0] == explain_outputs[1]

    ref = resources.files("treetalk") / "configs" / "study_demo.yaml"
    with resources.as_file(ref) as config_path:
        study = build_study(default_study_config())
        log = ResponseLog(tmp_path / "det.jsonl")
        simulate_log(study, log, participants=12, seed=5, group_sizes=(4, 4, 4))
        analyze_outputs = []
        for name in ("x", "y"):
            out = tmp_path / f"report-{name}.json"
            result = runner.invoke(
                main,
                ["analyze", "--responses", str(log.path), "--study-config",
                 str(config_path), "--out", str(out)],
                catch_exceptions=False,
            )
            assert result.exit_code == 0
            analyze_outputs.append(out.read_bytes())
    assert analyze_outputs[0] == analyze_outputs[1]
    report_pass("determinism (fit/explain/analyze byte-identical reruns)")
