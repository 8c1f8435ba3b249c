from __future__ import annotations

import json
import threading

import pytest
from fastapi.testclient import TestClient

from treetalk.analytics import SCENARIOS, FeatureSelection
from treetalk.dataset import RiskLabel
from treetalk.errors import ValidationError
from treetalk.service import (
    COMPLETENESS_PROMPT,
    CompletedSessionError,
    CursorError,
    DuplicateSubmissionError,
    ResponseLog,
    ScenarioBundle,
    SurveyService,
    UnknownSessionError,
    export_responses,
)
from treetalk.service.http import create_app

FEATURES = ("Age", "Smoking", "Cholesterol")


def make_bundles() -> list[ScenarioBundle]:
    bundles = []
    for i, scenario in enumerate(SCENARIOS):
        bundles.append(
            ScenarioBundle(
                scenario=scenario,
                order_index=i,
                patient_card=(("Age", "74"), ("Smoking", "Heavy"), ("Cholesterol", "High")),
                prediction=RiskLabel.HIGH,
                explanation_text=f"Narrative for {scenario}.",
                correct=FeatureSelection((0, 1, 1)),
            )
        )
    return bundles


def page1_payload():
    return {"selection": [1, 0, 0], "dwell_seconds": 70.0}


def page2_payload():
    return {
        "selection": [0, 1, 1],
        "dwell_seconds": 95.5,
        "ratings": {"completeness": 4, "understandability": 5, "verboseness": 2},
        "free_text": "clear enough",
    }


@pytest.fixture()
def service(tmp_path) -> SurveyService:
    return SurveyService(make_bundles(), ResponseLog(tmp_path / "responses.jsonl"))


def walk_through(service: SurveyService, participant: str) -> None:
    for cursor in range(service.total_pages):
        payload = page1_payload() if cursor % 2 == 0 else page2_payload()
        service.submit_response(participant, cursor, payload)


class TestSessions:
    def test_distinct_ids(self, service):
        a = service.create_session()
        b = service.create_session()
        assert a.participant != b.participant

    def test_fifty_concurrent_creations_are_distinct(self, service):
        ids = []
        lock = threading.Lock()

        def create():
            session = service.create_session()
            with lock:
                ids.append(session.participant)

        threads = [threading.Thread(target=create) for _ in range(50)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(ids)) == 50

    def test_unknown_session_rejected(self, service):
        with pytest.raises(UnknownSessionError):
            service.get_page("nope", 0)
        with pytest.raises(UnknownSessionError):
            service.submit_response("nope", 0, page1_payload())


class TestGetPage:
    def test_page_one_has_card_but_no_explanation(self, service):
        session = service.create_session()
        payload = service.get_page(session.participant, 0)
        assert payload["page"] == 1
        assert payload["scenario"] == "local-SHAP"  # fixed order, SHAP first
        assert len(payload["patient"]) == 3
        assert "explanation" not in payload
        assert "prediction" not in payload

    def test_page_two_carries_prompts_verbatim(self, service):
        session = service.create_session()
        service.submit_response(session.participant, 0, page1_payload())
        payload = service.get_page(session.participant, 1)
        assert payload["page"] == 2
        assert payload["explanation"] == "Narrative for local-SHAP."
        assert payload["likert_prompts"]["completeness"] == COMPLETENESS_PROMPT
        assert (
            payload["likert_prompts"]["completeness"]
            == "This explanation helps me completely understand why the AI system "
            "made the prediction"
        )

    def test_no_payload_ever_contains_correct_selection(self, service):
        # Scan every reachable page payload for the C vector.
        session = service.create_session()
        for cursor in range(service.total_pages):
            payload = service.get_page(session.participant, cursor)
            text = json.dumps(payload)
            assert "correct" not in text
            assert [0, 1, 1] not in list(payload.values())
            service.submit_response(
                session.participant, cursor,
                page1_payload() if cursor % 2 == 0 else page2_payload(),
            )

    def test_skipping_ahead_rejected(self, service):
        session = service.create_session()
        with pytest.raises(CursorError):
            service.get_page(session.participant, 1)

    def test_revisiting_earlier_page_allowed(self, service):
        session = service.create_session()
        service.submit_response(session.participant, 0, page1_payload())
        assert service.get_page(session.participant, 0)["page"] == 1

    def test_completed_session_rejected(self, service):
        session = service.create_session()
        walk_through(service, session.participant)
        with pytest.raises(CompletedSessionError):
            service.get_page(session.participant, 9)


class TestSubmit:
    def test_valid_submission_appends_exactly_one_record(self, service, tmp_path):
        session = service.create_session()
        service.submit_response(session.participant, 0, page1_payload())
        records, _ = ResponseLog(tmp_path / "responses.jsonl").read_all()
        assert len(records) == 1
        assert records[0].page == 1
        assert records[0].scenario == "local-SHAP"

    def test_out_of_range_rating_rejected(self, service):
        session = service.create_session()
        service.submit_response(session.participant, 0, page1_payload())
        bad = page2_payload()
        bad["ratings"]["completeness"] = 7
        with pytest.raises(ValidationError, match="1..5"):
            service.submit_response(session.participant, 1, bad)

    def test_wrong_selection_length_rejected(self, service):
        session = service.create_session()
        with pytest.raises(ValidationError, match="bits"):
            service.submit_response(
                session.participant, 0, {"selection": [1, 0], "dwell_seconds": 5}
            )

    def test_missing_ratings_on_page_two_rejected(self, service):
        session = service.create_session()
        service.submit_response(session.participant, 0, page1_payload())
        with pytest.raises(ValidationError, match="ratings"):
            service.submit_response(session.participant, 1, page1_payload())

    def test_duplicate_submission_rejected(self, service):
        session = service.create_session()
        service.submit_response(session.participant, 0, page1_payload())
        with pytest.raises(DuplicateSubmissionError):
            service.submit_response(session.participant, 0, page1_payload())

    def test_submitting_ahead_rejected(self, service):
        session = service.create_session()
        with pytest.raises(CursorError):
            service.submit_response(session.participant, 3, page2_payload())

    def test_full_walkthrough_completes(self, service):
        session = service.create_session()
        walk_through(service, session.participant)
        assert service._sessions[session.participant].completed
        with pytest.raises(CompletedSessionError):
            service.submit_response(session.participant, 9, page2_payload())

    def test_unknown_payload_field_rejected(self, service):
        session = service.create_session()
        bad = {**page1_payload(), "correct": [1, 1, 1]}
        with pytest.raises(ValidationError, match="unknown"):
            service.submit_response(session.participant, 0, bad)


class TestCrashRecovery:
    def test_replay_reconstructs_cursor_state(self, tmp_path):
        path = tmp_path / "log.jsonl"
        service = SurveyService(make_bundles(), ResponseLog(path))
        session = service.create_session()
        for cursor in range(4):
            service.submit_response(
                session.participant, cursor,
                page1_payload() if cursor % 2 == 0 else page2_payload(),
            )
        # Simulated crash: fresh service over the same log file.
        revived = SurveyService(make_bundles(), ResponseLog(path))
        assert revived._sessions[session.participant].cursor == 4
        payload = revived.get_page(session.participant, 4)
        assert payload["scenario"] == SCENARIOS[2]
        revived.submit_response(session.participant, 4, page1_payload())

    def test_torn_final_line_is_skipped(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = ResponseLog(path)
        log.append("p1", "local-easy", 1, page1_payload())
        with open(path, "a", encoding="utf-8") as fh:
            fh.write('{"schema": 1, "seq": 2, "participant": "p1", "scen')
        records, report = ResponseLog(path).read_all()
        assert len(records) == 1
        assert report.skipped == ((2, "malformed JSON"),)

    def test_tampered_record_fails_checksum(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = ResponseLog(path)
        log.append("p1", "local-easy", 1, page1_payload())
        text = path.read_text().replace('"page":1', '"page":2')
        path.write_text(text)
        records, report = ResponseLog(path).read_all()
        assert records == ()
        assert report.skipped[0][1] == "checksum mismatch"

    def test_appends_never_rewrite_committed_lines(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = ResponseLog(path)
        log.append("p1", "local-easy", 1, page1_payload())
        first_line = path.read_text().splitlines()[0]
        log.append("p1", "local-easy", 2, page2_payload())
        lines = path.read_text().splitlines()
        assert lines[0] == first_line
        assert len(lines) == 2


class TestExport:
    def test_one_complete_participant_yields_five_responses(self, service):
        session = service.create_session()
        walk_through(service, session.participant)
        result = service.export_responses()
        assert len(result.responses) == 5
        assert {r.scenario for r in result.responses} == set(SCENARIOS)
        assert result.incomplete == ()
        for r in result.responses:
            assert r.before.bits == (1, 0, 0)
            assert r.after.bits == (0, 1, 1)
            assert r.dwell_seconds == {1: 70.0, 2: 95.5}

    def test_empty_log_exports_nothing(self, service):
        assert service.export_responses().responses == ()

    def test_incomplete_scenario_excluded_and_flagged(self, service):
        session = service.create_session()
        service.submit_response(session.participant, 0, page1_payload())
        result = service.export_responses()
        assert result.responses == ()
        assert result.incomplete == ((session.participant, "local-SHAP"),)

    def test_export_is_pure_function_of_log(self, service):
        session = service.create_session()
        walk_through(service, session.participant)
        a = service.export_responses()
        b = service.export_responses()
        assert a == b

    def test_malformed_direct_writes_skipped_with_reason(self, tmp_path):
        # The service validates submissions, but the log admits direct
        # writers; bad shapes must not break the export.
        log = ResponseLog(tmp_path / "direct.jsonl")
        log.append("p1", "local-easy", 1, {"selection": [1, 0, 1], "dwell_seconds": 60.0})
        log.append("p1", "local-easy", 2, {"selection": [1, 0, 1], "dwell_seconds": 60.0})
        log.append("p2", "local-easy", 1, {"selection": [1, 0, 9], "dwell_seconds": 60.0})
        log.append(
            "p2", "local-easy", 2,
            {
                "selection": [1, 0, 1], "dwell_seconds": 61.0,
                "ratings": {"completeness": 5, "understandability": 4, "verboseness": 1},
                "free_text": "",
            },
        )
        records, _ = log.read_all()
        result = export_responses(records)
        # p1 page 2 lacks ratings; p2 page 1 has a non-bit selection.
        assert result.responses == ()
        assert {(p, s) for p, s, _ in result.malformed} == {
            ("p1", "local-easy"), ("p2", "local-easy"),
        }

    def test_export_count_matches_independent_scan(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = ResponseLog(path)
        service = SurveyService(make_bundles(), log)
        for _ in range(3):
            session = service.create_session()
            walk_through(service, session.participant)
        partial = service.create_session()
        service.submit_response(partial.participant, 0, page1_payload())
        records, _ = ResponseLog(path).read_all()
        pages = {}
        for record in records:
            pages.setdefault((record.participant, record.scenario), set()).add(record.page)
        complete = sum(1 for ps in pages.values() if ps == {1, 2})
        result = export_responses(records)
        assert len(result.responses) == complete == 15


class TestHttpApi:
    @pytest.fixture()
    def client(self, tmp_path):
        service = SurveyService(make_bundles(), ResponseLog(tmp_path / "log.jsonl"))
        app = create_app(service, operator_token="secret")
        return TestClient(app)

    def test_full_flow(self, client):
        created = client.post("/api/session")
        assert created.status_code == 201
        sid = created.json()["participant_id"]
        assert created.json()["total_pages"] == 10

        page = client.get(f"/api/session/{sid}/page/0")
        assert page.status_code == 200
        assert page.json()["page"] == 1

        for cursor in range(10):
            payload = page1_payload() if cursor % 2 == 0 else page2_payload()
            response = client.post(f"/api/session/{sid}/page/{cursor}", json=payload)
            assert response.status_code == 200, response.text
        assert response.json()["completed"] is True

        export = client.get("/api/export", headers={"X-Operator-Token": "secret"})
        assert export.status_code == 200
        assert len(export.json()["responses"]) == 5

    def test_machine_readable_error_codes(self, client):
        missing = client.get("/api/session/nope/page/0")
        assert missing.status_code == 404
        assert missing.json()["error"]["code"] == "unknown_session"

        sid = client.post("/api/session").json()["participant_id"]
        ahead = client.get(f"/api/session/{sid}/page/5")
        assert ahead.status_code == 409
        assert ahead.json()["error"]["code"] == "cursor_out_of_range"

        bad = client.post(
            f"/api/session/{sid}/page/0", json={"selection": [9], "dwell_seconds": 1}
        )
        assert bad.status_code == 400
        assert bad.json()["error"]["code"] == "validation_error"

    def test_export_requires_operator_token(self, client):
        assert client.get("/api/export").status_code == 403
        wrong = client.get("/api/export", headers={"X-Operator-Token": "nope"})
        assert wrong.status_code == 403

    def test_no_client_payload_contains_correct_vector(self, client):
        sid = client.post("/api/session").json()["participant_id"]
        for cursor in range(10):
            page = client.get(f"/api/session/{sid}/page/{cursor}")
            assert '"correct"' not in page.text
            payload = page1_payload() if cursor % 2 == 0 else page2_payload()
            submit = client.post(f"/api/session/{sid}/page/{cursor}", json=payload)
            assert '"correct"' not in submit.text


class TestBundleValidation:
    def test_study_needs_all_five_scenarios(self, tmp_path):
        bundles = make_bundles()[:4]
        with pytest.raises(ValidationError, match="exactly one bundle"):
            SurveyService(bundles, ResponseLog(tmp_path / "log.jsonl"))

    def test_correct_length_must_match_card(self):
        with pytest.raises(ValidationError, match="C length"):
            ScenarioBundle(
                scenario="local-easy",
                order_index=0,
                patient_card=(("Age", "74"),),
                prediction=RiskLabel.HIGH,
                explanation_text="x",
                correct=FeatureSelection((1, 0)),
            )

    def test_randomized_order_is_deterministic_per_participant(self, tmp_path):
        service = SurveyService(
            make_bundles(), ResponseLog(tmp_path / "log.jsonl"), randomize_order=True
        )
        session = service.create_session()
        first = [
            service.get_page(session.participant, 0)["scenario"],
        ]
        again = [
            service.get_page(session.participant, 0)["scenario"],
        ]
        assert first == again
