"""HTTP front end for a loaded search engine.

Thin JSON layer: requests are validated by hand, domain errors map to status
codes, and all state lives in the engine. Searches are lock-free reads on the
immutable index; per-session mutations are serialized by the session store.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .engine import SearchEngine
from .errors import (
    CoordinateRangeError,
    EmptyExportError,
    EncoderConfigurationError,
    EncoderUnavailableError,
    InvalidMarkError,
    SessionNotFoundError,
)
from .filters import FilterSpec

_ERROR_STATUS = (
    (SessionNotFoundError, 404),
    (InvalidMarkError, 400),
    (EmptyExportError, 400),
    (CoordinateRangeError, 400),
    (EncoderUnavailableError, 503),
    (EncoderConfigurationError, 500),
    (ValueError, 400),
)


def _wire_hit(row: dict) -> dict:
    hit = {
        "observation_id": row["observation_id"],
        "rank": row["rank"],
        "score": row["score"],
        "taxon_path": row["taxon_path"],
        "observed_at": row["observed_at"],
        "image_url": row["image_url"],
        "marked": row["marked"],
    }
    if row["latitude"] is not None:
        hit["latitude"] = row["latitude"]
        hit["longitude"] = row["longitude"]
    return hit


def _require_positive_int(payload: dict, key: str, default=None):
    value = payload.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"{key} must be a positive integer")
    return value


def create_app(engine: SearchEngine, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ecosearch", docs_url=None, redoc_url=None, openapi_url=None)

    def _handler(status: int):
        def handle(request, exc):
            return JSONResponse({"error": str(exc)}, status_code=status)

        return handle

    for exc_type, status in _ERROR_STATUS:
        app.add_exception_handler(exc_type, _handler(status))
    app.add_exception_handler(RequestValidationError, _handler(400))

    @app.post("/v1/sessions")
    def create_session() -> dict:
        return {"session_id": engine.create_session()}

    @app.post("/v1/sessions/{session_id}/search")
    def run_search(session_id: str, payload: dict) -> dict:
        query_text = payload.get("query_text")
        if not isinstance(query_text, str) or not query_text.strip():
            raise ValueError("query_text must be a non-empty string")
        k = _require_positive_int(payload, "k", default=50)
        nprobe = _require_positive_int(payload, "nprobe")
        filters = payload.get("filters") or {}
        if not isinstance(filters, dict):
            raise ValueError("filters must be an object")
        spec = FilterSpec.from_json(filters)
        rows = engine.search_page(session_id, query_text, spec, k=k, nprobe=nprobe)
        return {"hits": [_wire_hit(row) for row in rows]}

    @app.post("/v1/sessions/{session_id}/marks")
    def set_mark(session_id: str, payload: dict) -> dict:
        observation_id = payload.get("observation_id")
        if isinstance(observation_id, bool) or not isinstance(observation_id, int):
            raise ValueError("observation_id must be an integer")
        marked = payload.get("marked")
        if not isinstance(marked, bool):
            raise ValueError("marked must be a boolean")
        return engine.mark(session_id, observation_id, marked)

    @app.get("/v1/sessions/{session_id}/export.csv")
    def export_csv(session_id: str) -> Response:
        data = engine.export_csv(session_id)
        return Response(
            content=data,
            media_type="text/csv; charset=utf-8",
            headers={
                "Content-Disposition": f'attachment; filename="{session_id}.csv"'
            },
        )

    @app.get("/v1/health")
    def health() -> dict:
        return engine.health()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
