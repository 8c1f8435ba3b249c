"""Session flow and response capture for the two-page scenario survey.

Each study serves five scenario bundles; each scenario has two pages
(page 1: patient card and before-selection, page 2: prediction,
explanation, after-selection, three Likert prompts, free text). The page
cursor advances monotonically, duplicate submissions are rejected, and the
server-side correct selection C is never part of any page payload.

Sessions are reconstructed from the response log on restart: a session's
cursor equals its count of committed submissions. Only submissions are
logged (a created-but-idle session does not survive a restart; the client
simply creates a new one).
"""

from __future__ import annotations

import hashlib
import random
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

from ..analytics import SCENARIOS, FeatureSelection, LikertRatings, SurveyResponse
from ..dataset import RiskLabel
from ..errors import ValidationError
from .log import LogRecord, ResponseLog

PAGES_PER_SCENARIO = 2

SELECTION_PROMPT_BEFORE = (
    "Pick all the features you think might be influential in predicting "
    "this patient's risk of CHD."
)
SELECTION_PROMPT_AFTER = (
    "Based on the explanation, pick all the features you think were "
    "influential in predicting this patient's risk of CHD."
)
COMPLETENESS_PROMPT = (
    "This explanation helps me completely understand why the AI system made the prediction"
)
UNDERSTANDABILITY_PROMPT = (
    "Based on the explanation I understand how the model would behave for another patient"
)
VERBOSENESS_PROMPT = "This explanation is long and uses more words than required"
FREE_TEXT_PROMPT = "Any feedback on this explanation? (optional)"


class UnknownSessionError(ValidationError):
    code = "unknown_session"


class CursorError(ValidationError):
    code = "cursor_out_of_range"


class DuplicateSubmissionError(ValidationError):
    code = "duplicate_submission"


class CompletedSessionError(ValidationError):
    code = "session_completed"


@dataclass(frozen=True)
class ScenarioBundle:
    """Everything one scenario needs, including the server-only C vector."""

    scenario: str
    order_index: int
    patient_card: tuple[tuple[str, str], ...]
    prediction: RiskLabel
    explanation_text: str
    correct: FeatureSelection

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        if len(self.correct) != len(self.patient_card):
            raise ValidationError(
                f"scenario {self.scenario!r}: C length must equal the patient card length"
            )


@dataclass
class StudySession:
    participant: str
    issued_ts: str
    cursor: int = 0

    @property
    def completed(self) -> bool:
        return self.cursor >= len(SCENARIOS) * PAGES_PER_SCENARIO


@dataclass(frozen=True)
class ExportResult:
    responses: tuple[SurveyResponse, ...]
    incomplete: tuple[tuple[str, str], ...]  # (participant, scenario)
    skipped_lines: tuple[tuple[int, str], ...]
    malformed: tuple[tuple[str, str, str], ...] = ()  # (participant, scenario, reason)


class SurveyService:
    """The study backend: sessions, page payloads, validated submissions."""

    def __init__(
        self,
        bundles: Sequence[ScenarioBundle],
        log: ResponseLog,
        *,
        randomize_order: bool = False,
    ):
        if len(bundles) != len(SCENARIOS) or {b.scenario for b in bundles} != set(SCENARIOS):
            raise ValidationError(
                f"a study needs exactly one bundle per scenario: {list(SCENARIOS)}"
            )
        lengths = {len(b.correct) for b in bundles}
        if len(lengths) != 1:
            raise ValidationError("all scenarios must display the same feature count")
        self._bundles = {b.scenario: b for b in bundles}
        self._display_order = tuple(
            b.scenario for b in sorted(bundles, key=lambda b: b.order_index)
        )
        self._n_features = lengths.pop()
        self._log = log
        self._randomize_order = randomize_order
        self._sessions: dict[str, StudySession] = {}
        self._recover()

    @property
    def total_pages(self) -> int:
        return len(SCENARIOS) * PAGES_PER_SCENARIO

    @property
    def feature_count(self) -> int:
        return self._n_features

    def _recover(self) -> None:
        records, _ = self._log.read_all()
        counts: dict[str, int] = {}
        first_ts: dict[str, str] = {}
        for record in records:
            counts[record.participant] = counts.get(record.participant, 0) + 1
            first_ts.setdefault(record.participant, record.ts)
        for participant, count in counts.items():
            self._sessions[participant] = StudySession(
                participant=participant,
                issued_ts=first_ts[participant],
                cursor=min(count, self.total_pages),
            )

    def _order_for(self, participant: str) -> tuple[str, ...]:
        if not self._randomize_order:
            return self._display_order
        seed = int.from_bytes(
            hashlib.sha256(participant.encode("utf-8")).digest()[:8], "big"
        )
        order = list(self._display_order)
        random.Random(seed).shuffle(order)
        return tuple(order)

    def create_session(self) -> StudySession:
        participant = f"p-{uuid.uuid4().hex}"
        session = StudySession(
            participant=participant,
            issued_ts=datetime.now(timezone.utc).isoformat(),
        )
        self._sessions[participant] = session
        return session

    def _session(self, participant: str) -> StudySession:
        session = self._sessions.get(participant)
        if session is None:
            raise UnknownSessionError(f"unknown session {participant!r}")
        return session

    def _locate(self, participant: str, cursor: int) -> tuple[ScenarioBundle, int]:
        if not 0 <= cursor < self.total_pages:
            raise CursorError(f"cursor {cursor} out of range 0..{self.total_pages - 1}")
        order = self._order_for(participant)
        scenario = order[cursor // PAGES_PER_SCENARIO]
        return self._bundles[scenario], cursor % PAGES_PER_SCENARIO + 1

    def get_page(self, participant: str, cursor: int) -> dict:
        """Page payload for a cursor the session has reached (no skipping ahead)."""
        session = self._session(participant)
        if session.completed:
            raise CompletedSessionError("session already completed")
        bundle, page = self._locate(participant, cursor)
        if cursor > session.cursor:
            raise CursorError(
                f"cursor {cursor} is ahead of the session cursor {session.cursor}"
            )
        payload: dict = {
            "scenario": bundle.scenario,
            "cursor": cursor,
            "page": page,
            "total_pages": self.total_pages,
            "patient": [{"feature": f, "value": v} for f, v in bundle.patient_card],
            "features": [f for f, _ in bundle.patient_card],
        }
        if page == 1:
            payload["selection_prompt"] = SELECTION_PROMPT_BEFORE
        else:
            payload["selection_prompt"] = SELECTION_PROMPT_AFTER
            payload["prediction"] = bundle.prediction.value
            payload["explanation"] = bundle.explanation_text
            payload["likert_prompts"] = {
                "completeness": COMPLETENESS_PROMPT,
                "understandability": UNDERSTANDABILITY_PROMPT,
                "verboseness": VERBOSENESS_PROMPT,
            }
            payload["free_text_prompt"] = FREE_TEXT_PROMPT
        return payload

    def _validate_payload(self, page: int, payload: Mapping[str, object]) -> dict:
        if not isinstance(payload, Mapping):
            raise ValidationError("payload must be an object")
        allowed = {"selection", "dwell_seconds"}
        if page == 2:
            allowed |= {"ratings", "free_text"}
        unknown = set(payload) - allowed
        if unknown:
            raise ValidationError(f"unknown payload fields: {sorted(unknown)}")
        selection = payload.get("selection")
        if (
            not isinstance(selection, list)
            or len(selection) != self._n_features
            or any(b not in (0, 1) for b in selection)
        ):
            raise ValidationError(
                f"selection must be a list of {self._n_features} bits (0/1)"
            )
        dwell = payload.get("dwell_seconds")
        if not isinstance(dwell, (int, float)) or isinstance(dwell, bool) or dwell < 0:
            raise ValidationError("dwell_seconds must be a non-negative number")
        clean: dict = {"selection": [int(b) for b in selection],
                       "dwell_seconds": float(dwell)}
        if page == 2:
            ratings = payload.get("ratings")
            if not isinstance(ratings, Mapping) or set(ratings) != {
                "completeness", "understandability", "verboseness",
            }:
                raise ValidationError(
                    "ratings must carry exactly completeness, understandability, verboseness"
                )
            for name, value in ratings.items():
                if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                    raise ValidationError(f"rating {name!r} must be an integer in 1..5")
            free_text = payload.get("free_text", "")
            if not isinstance(free_text, str):
                raise ValidationError("free_text must be a string")
            clean["ratings"] = dict(ratings)
            clean["free_text"] = free_text
        return clean

    def submit_response(self, participant: str, cursor: int, payload: Mapping[str, object]) -> dict:
        """Validate and durably record one page submission; advance the cursor."""
        session = self._session(participant)
        if session.completed:
            raise CompletedSessionError("session already completed")
        bundle, page = self._locate(participant, cursor)
        if cursor < session.cursor:
            raise DuplicateSubmissionError(
                f"page at cursor {cursor} was already submitted"
            )
        if cursor > session.cursor:
            raise CursorError(
                f"cursor {cursor} is ahead of the session cursor {session.cursor}"
            )
        clean = self._validate_payload(page, payload)
        self._log.append(participant, bundle.scenario, page, clean)
        session.cursor += 1
        return {
            "accepted": True,
            "next_cursor": session.cursor,
            "completed": session.completed,
        }

    def export_responses(self) -> ExportResult:
        records, report = self._log.read_all()
        return export_responses(records, skipped_lines=report.skipped)


def export_responses(
    records: Iterable[LogRecord],
    *,
    skipped_lines: tuple[tuple[int, str], ...] = (),
) -> ExportResult:
    """Join page-1/page-2 records into SurveyResponses, purely from the log.

    The first committed record per (participant, scenario, page) wins;
    scenarios missing either page are reported incomplete and excluded.
    Output order is participant id, then canonical scenario order, so two
    exports of the same log are identical.
    """
    pages: dict[tuple[str, str], dict[int, LogRecord]] = {}
    for record in records:
        slot = pages.setdefault((record.participant, record.scenario), {})
        if record.page not in slot:
            slot[record.page] = record
    responses: list[SurveyResponse] = []
    incomplete: list[tuple[str, str]] = []
    malformed: list[tuple[str, str, str]] = []
    order = {s: i for i, s in enumerate(SCENARIOS)}
    for (participant, scenario) in sorted(pages, key=lambda k: (k[0], order.get(k[1], 99))):
        slot = pages[(participant, scenario)]
        if 1 not in slot or 2 not in slot:
            incomplete.append((participant, scenario))
            continue
        page1, page2 = slot[1], slot[2]
        # Records written through the service are pre-validated, but the
        # log format admits direct writers; reject bad shapes per pair
        # instead of failing the whole export.
        try:
            ratings = page2.payload["ratings"]
            response = SurveyResponse(
                participant=participant,
                scenario=scenario,
                before=FeatureSelection(tuple(page1.payload["selection"])),
                after=FeatureSelection(tuple(page2.payload["selection"])),
                ratings=LikertRatings(
                    completeness=ratings["completeness"],
                    understandability=ratings["understandability"],
                    verboseness=ratings["verboseness"],
                ),
                free_text=str(page2.payload.get("free_text", "")),
                dwell_seconds={
                    1: float(page1.payload["dwell_seconds"]),
                    2: float(page2.payload["dwell_seconds"]),
                },
            )
        except (KeyError, TypeError, ValueError) as exc:
            malformed.append((participant, scenario, str(exc)))
            continue
        responses.append(response)
    return ExportResult(
        responses=tuple(responses),
        incomplete=tuple(incomplete),
        skipped_lines=skipped_lines,
        malformed=tuple(malformed),
    )
