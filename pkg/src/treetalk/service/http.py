"""HTTP surface over the survey core (FastAPI).

Endpoints (JSON bodies, documented in docs/service_api.md):

    POST /api/session                    -> new session
    GET  /api/session/{sid}/page/{cur}   -> page payload
    POST /api/session/{sid}/page/{cur}   -> submit a page
    GET  /api/export                     -> operator-only response export
    GET  /api/health

Errors carry machine-readable codes: {"error": {"code": ..., "message": ...}}.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Body, FastAPI, Header, Request
from fastapi.responses import JSONResponse

from ..errors import ValidationError
from .core import (
    CompletedSessionError,
    CursorError,
    DuplicateSubmissionError,
    SurveyService,
    UnknownSessionError,
)

_STATUS = {
    UnknownSessionError: 404,
    CursorError: 409,
    DuplicateSubmissionError: 409,
    CompletedSessionError: 410,
}


def _error_response(exc: ValidationError) -> JSONResponse:
    code = getattr(exc, "code", "validation_error")
    status = _STATUS.get(type(exc), 400)
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": str(exc)}}
    )


def create_app(
    service: SurveyService,
    *,
    operator_token: str | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="treetalk survey service", docs_url=None, redoc_url=None)

    @app.exception_handler(ValidationError)
    async def handle_validation(_request: Request, exc: ValidationError) -> JSONResponse:
        return _error_response(exc)

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/api/session", status_code=201)
    def create_session() -> dict:
        session = service.create_session()
        return {
            "participant_id": session.participant,
            "cursor": session.cursor,
            "total_pages": service.total_pages,
            "feature_count": service.feature_count,
        }

    @app.get("/api/session/{participant_id}/page/{cursor}")
    def get_page(participant_id: str, cursor: int) -> dict:
        return service.get_page(participant_id, cursor)

    @app.post("/api/session/{participant_id}/page/{cursor}")
    def submit(participant_id: str, cursor: int, payload: dict = Body(...)) -> dict:
        return service.submit_response(participant_id, cursor, payload)

    @app.get("/api/export")
    def export(x_operator_token: str | None = Header(default=None)) -> JSONResponse:
        if operator_token is not None and x_operator_token != operator_token:
            return JSONResponse(
                status_code=403,
                content={"error": {"code": "forbidden", "message": "operator token required"}},
            )
        result = service.export_responses()
        return JSONResponse(
            content={
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
        )

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="static")

    return app
