"""Command-line front door wiring the pipeline together.

Exit codes: 0 success, 1 validation problem, 2 I/O problem. Every output
path accepts `-` for standard output, and every subcommand is
deterministic for a fixed seed.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import analytics, dataset, narrate, tree as tree_mod
from .attribution import filter_positive_sorted, shapley
from .errors import ValidationError
from .explain import (
    ExplanationKind,
    build_global_ir,
    build_local_ir,
    build_shap_ir,
    correct_importance,
    default_expectation_map,
    load_expectation_map,
)
from .service.core import export_responses
from .service.log import ResponseLog
from .simulate import simulate_log
from .study import build_study, load_study_config


def _cli_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _write_output(path: str, text: str) -> None:
    if path == "-":
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_spec(spec_path: str | None) -> dataset.CategorySpec:
    if spec_path in (None, "builtin"):
        return dataset.default_category_spec()
    return dataset.load_category_spec(spec_path)


def _load_patient(path: str, spec: dataset.CategorySpec) -> dataset.PatientRecord:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValidationError("patient file must be a JSON object of feature values")
    return dataset.make_record("patient", raw, spec)


def _load_tree(path: str) -> tree_mod.DecisionTree:
    return tree_mod.deserialize(Path(path).read_text(encoding="utf-8"))


@click.group()
def main() -> None:
    """Narrative decision-tree explanations, survey service, and analytics."""


@main.command()
@click.option("--input", "input_path", required=True, help="Raw delimited table.")
@click.option("--spec", "spec_path", default=None, help="Category spec YAML (default: builtin).")
@click.option("--output", "-o", "output_path", default="-", help="Categorized table ('-' = stdout).")
@_cli_errors
def categorize(input_path: str, spec_path: str | None, output_path: str) -> None:
    """Categorize a raw table; prints a drop report to stderr."""
    spec = _load_spec(spec_path)
    result = dataset.load_records(input_path, spec)
    if result.report.precategorized_columns:
        raise ValidationError(
            "input already carries category labels in "
            f"{sorted(result.report.precategorized_columns)}; expected raw values"
        )
    _write_output(output_path, dataset.serialize_records(result.records))
    click.echo(f"drop report: {result.report.summary()}", err=True)
    for row_no, reason in result.report.dropped_rows:
        click.echo(f"  dropped row {row_no}: {reason}", err=True)


@main.command()
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--n", type=int, default=2874, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True)
@click.option("--missing", type=int, default=205, show_default=True,
              help="Rows to blank one cell in (dropped on load).")
@click.option("--spec", "spec_path", default=None, help="Category spec YAML (default: builtin).")
@click.option("--out", "-o", "out_path", required=True)
@_cli_errors
def synth(seed: int, n: int, noise: float, missing: int, spec_path: str | None,
          out_path: str) -> None:
    """Write a raw synthetic table with ground-truth labels."""
    spec = _load_spec(spec_path)
    dataset.generate_synthetic_table(
        seed, n, spec, dataset.DEFAULT_GROUND_TRUTH, out_path,
        noise=noise, missing_rows=missing,
    )
    click.echo(f"wrote {n} rows ({missing} incomplete) to {out_path}", err=True)


@main.command()
@click.option("--records", "records_path", required=True, help="Raw or categorized table.")
@click.option("--spec", "spec_path", default=None)
@click.option("--age-min", type=int, required=True)
@click.option("--age-max", type=int, required=True)
@click.option("--gender", default=None)
@click.option("--max-depth", type=int, default=4, show_default=True)
@click.option("--min-support", type=int, default=5, show_default=True)
@click.option("--out", "-o", "out_path", default="-")
@_cli_errors
def fit(records_path: str, spec_path: str | None, age_min: int, age_max: int,
        gender: str | None, max_depth: int, min_support: int, out_path: str) -> None:
    """Fit a depth-bounded tree on a cohort and write its document."""
    spec = _load_spec(spec_path)
    records = dataset.load_records(records_path, spec).records
    cohort_records = dataset.filter_cohort(records, (age_min, age_max), gender)
    if not cohort_records.records:
        raise ValidationError("cohort filter matched no records")
    fitted = tree_mod.fit_greedy(cohort_records, max_depth, min_support)
    fitted = tree_mod.annotate_leaves(fitted, cohort_records)
    fitted = replace(fitted, cohort=tree_mod.Cohort(age_min, age_max, gender))
    _write_output(out_path, tree_mod.serialize(fitted))
    leaf_count = len(tree_mod.leaves(fitted))
    acc = (fitted.training_accuracy or 0.0) * 100
    click.echo(
        f"{age_min} - {age_max} | {gender or 'any'} | leaves {leaf_count} | "
        f"depth {fitted.depth} | accuracy {acc:.1f}",
        err=True,
    )


@main.command()
@click.option("--tree", "tree_path", required=True, help="Tree document (JSON).")
@click.option("--patient", "patient_path", required=True, help="Patient JSON object.")
@click.option("--kind", type=click.Choice(["local", "global", "shap"]), required=True)
@click.option("--expectation-map", "em_path", default=None)
@click.option("--verbal-scale", "scale_path", default=None)
@click.option("--records", "records_path", default=None,
              help="Background records (required for --kind shap).")
@click.option("--ir", "dump_ir", is_flag=True, help="Dump the IR as JSON instead of text.")
@click.option("--out", "-o", "out_path", default="-")
@_cli_errors
def explain(tree_path: str, patient_path: str, kind: str, em_path: str | None,
            scale_path: str | None, records_path: str | None, dump_ir: bool,
            out_path: str) -> None:
    """Render a local, global, or SHAP explanation for one patient."""
    fitted = _load_tree(tree_path)
    patient = _load_patient(patient_path, fitted.spec)
    em = (default_expectation_map() if em_path in (None, "builtin")
          else load_expectation_map(em_path))
    scale = (narrate.default_verbal_scale() if scale_path in (None, "builtin")
             else narrate.load_verbal_scale(scale_path))
    if kind == "local":
        ir = build_local_ir(fitted, patient, em)
    elif kind == "global":
        ir = build_global_ir(fitted, patient, em)
    else:
        if records_path is None:
            raise ValidationError("--kind shap needs --records for the background set")
        background = _background(records_path, fitted)
        ir = build_shap_ir(patient, shapley(fitted, patient, background))
    if dump_ir:
        _write_output(out_path, _ir_to_json(ir))
    else:
        _write_output(out_path, narrate.realize(ir, scale) + "\n")


def _background(records_path: str, fitted: tree_mod.DecisionTree) -> dataset.RecordSet:
    records = dataset.load_records(records_path, fitted.spec).records
    if fitted.cohort is not None:
        cohort_records = dataset.filter_cohort(
            records, (fitted.cohort.age_min, fitted.cohort.age_max), fitted.cohort.gender
        )
        if cohort_records.records:
            return cohort_records
    return records


def _ir_to_json(ir) -> str:
    doc = {
        "kind": ir.kind.value,
        "header": {"age": ir.header[0], "gender": ir.header[1]},
        "chunk_count": ir.chunk_count,
        "triggered_index": ir.triggered_index,
        "rules": [
            {
                "outcome": rule.outcome.value,
                "probability": rule.probability,
                "confidence": rule.confidence,
                "leaf_id": rule.leaf_id,
                "conditions": [
                    {"feature": c.feature, "value": c.value, "contradictory": c.contradictory}
                    for c in rule.conditions
                ],
            }
            for rule in ir.rules
        ],
        "attributions": (
            [[f, s] for f, s in ir.attributions] if ir.attributions is not None else None
        ),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@main.command()
@click.option("--tree", "tree_path", required=True)
@click.option("--patient", "patient_path", required=True)
@click.option("--records", "records_path", required=True,
              help="Background records (tree cohort applied when present).")
@click.option("--out", "-o", "out_path", default="-")
@_cli_errors
def attribute(tree_path: str, patient_path: str, records_path: str, out_path: str) -> None:
    """Exact Shapley attribution of one prediction."""
    fitted = _load_tree(tree_path)
    patient = _load_patient(patient_path, fitted.spec)
    background = _background(records_path, fitted)
    vector = shapley(fitted, patient, background)
    doc = {
        "baseline": vector.baseline,
        "prediction": vector.prediction,
        "scores": dict(zip(vector.features, vector.scores)),
        "positive": [[f, s] for f, s in filter_positive_sorted(vector)],
    }
    _write_output(out_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


@main.command()
@click.option("--responses", "log_path", required=True, help="Survey response log (JSONL).")
@click.option("--study-config", "config_path", required=True)
@click.option("--seed", type=int, default=None, help="Override the study seed for clustering.")
@click.option("--out", "-o", "out_path", default=None, help="Write the JSON report here.")
@_cli_errors
def analyze(log_path: str, config_path: str, seed: int | None, out_path: str | None) -> None:
    """Compute means, pairwise Wilcoxon tests, clusters, and error tables."""
    config = load_study_config(config_path)
    study = build_study(config)
    records, read_report = ResponseLog(log_path).read_all()
    result = export_responses(records, skipped_lines=read_report.skipped)
    for line_no, reason in result.skipped_lines:
        click.echo(f"skipped log line {line_no}: {reason}", err=True)
    for participant, scenario, reason in result.malformed:
        click.echo(f"skipped malformed record {participant}/{scenario}: {reason}", err=True)
    report = analytics.build_report(
        result.responses,
        study.correct,
        config.display_features,
        seed=config.seed if seed is None else seed,
        alpha=config.alpha,
    )
    click.echo(analytics.render_report_text(report), nl=False)
    if out_path is not None:
        _write_output(out_path, analytics.report_to_json(report))


@main.command()
@click.option("--study-config", "config_path", required=True)
@click.option("--log", "log_path", required=True, help="Response log to write.")
@click.option("--participants", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--groups-out", default=None, help="Write the planted groups JSON here.")
@_cli_errors
def simulate(config_path: str, log_path: str, participants: int, seed: int,
             groups_out: str | None) -> None:
    """Write scripted survey responses with a planted 3-group structure."""
    study = build_study(load_study_config(config_path))
    sizes = _default_group_sizes(participants)
    assignment = simulate_log(
        study, ResponseLog(log_path), participants=participants, seed=seed,
        group_sizes=sizes,
    )
    click.echo(
        f"simulated {participants} participants ({', '.join(map(str, sizes))}) "
        f"into {log_path}",
        err=True,
    )
    if groups_out is not None:
        _write_output(groups_out, json.dumps(assignment, indent=2, sort_keys=True) + "\n")


def _default_group_sizes(participants: int) -> tuple[int, int, int]:
    # Mirror the production 11/22/16 split proportionally.
    first = max(1, round(participants * 0.24))
    second = max(1, round(participants * 0.44))
    third = participants - first - second
    if third < 1:
        raise ValidationError("participant count too small for three groups")
    return first, second, third


@main.command()
@click.option("--study-config", "config_path", required=True)
@click.option("--log", "log_path", required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--operator-token", default=None, help="Require this token for /api/export.")
@click.option("--static-dir", default=None, help="Serve these assets at /.")
@_cli_errors
def serve(config_path: str, log_path: str, host: str, port: int,
          operator_token: str | None, static_dir: str | None) -> None:
    """Run the survey service."""
    import uvicorn

    from .service.core import SurveyService
    from .service.http import create_app

    config = load_study_config(config_path)
    study = build_study(config)
    service = SurveyService(
        study.bundles, ResponseLog(log_path), randomize_order=config.randomize_order
    )
    app = create_app(service, operator_token=operator_token, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--log", "log_path", required=True)
@click.option("--out", "-o", "out_path", default="-")
@_cli_errors
def export(log_path: str, out_path: str) -> None:
    """Export joined SurveyResponses from a response log."""
    records, read_report = ResponseLog(log_path).read_all()
    result = export_responses(records, skipped_lines=read_report.skipped)
    doc = {
        "responses": [
            {
                "participant": r.participant,
                "scenario": r.scenario,
                "before": list(r.before.bits),
                "after": list(r.after.bits),
                "ratings": {
                    "completeness": r.ratings.completeness,
                    "understandability": r.ratings.understandability,
                    "verboseness": r.ratings.verboseness,
                },
                "free_text": r.free_text,
                "dwell_seconds": {str(k): v for k, v in r.dwell_seconds.items()},
            }
            for r in result.responses
        ],
        "incomplete": [list(pair) for pair in result.incomplete],
        "skipped_lines": [list(pair) for pair in result.skipped_lines],
        "malformed": [list(entry) for entry in result.malformed],
    }
    _write_output(out_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
