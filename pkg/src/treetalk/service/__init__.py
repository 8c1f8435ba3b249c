"""Survey backend: scenario pages, durable response log, export."""

from .core import (
    COMPLETENESS_PROMPT,
    PAGES_PER_SCENARIO,
    SELECTION_PROMPT_AFTER,
    SELECTION_PROMPT_BEFORE,
    UNDERSTANDABILITY_PROMPT,
    VERBOSENESS_PROMPT,
    CompletedSessionError,
    CursorError,
    DuplicateSubmissionError,
    ExportResult,
    ScenarioBundle,
    StudySession,
    SurveyService,
    UnknownSessionError,
    export_responses,
)
from .log import LogReadReport, LogRecord, ResponseLog

__all__ = [
    "COMPLETENESS_PROMPT",
    "PAGES_PER_SCENARIO",
    "SELECTION_PROMPT_AFTER",
    "SELECTION_PROMPT_BEFORE",
    "UNDERSTANDABILITY_PROMPT",
    "VERBOSENESS_PROMPT",
    "CompletedSessionError",
    "CursorError",
    "DuplicateSubmissionError",
    "ExportResult",
    "LogReadReport",
    "LogRecord",
    "ResponseLog",
    "ScenarioBundle",
    "StudySession",
    "SurveyService",
    "UnknownSessionError",
    "export_responses",
]
