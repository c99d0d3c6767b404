"""HTTP service: live prediction with explanations, plus the counterbalanced
review-session API used by the decision console.

Prediction responses are serialized with sorted keys so identical requests
against the same checkpoint produce byte-identical bodies.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .errors import DataError
from .explain import explain
from .pipeline import Pipeline
from .sentences import split_sentences
from .study import (
    SessionStore,
    StudyBadRequest,
    StudyConflict,
    StudyNotFound,
    StudySet,
    clean_and_summarize,
    load_study_set,
)
from .types import Document

log = logging.getLogger("conceptproto")


class PredictBody(BaseModel):
    text: str = ""


class SessionBody(BaseModel):
    participant_id: str = ""
    group: str | None = None


class ResponseBody(BaseModel):
    item_id: str
    label: str
    confidence: int
    elapsed_ms: int


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _session_payload(record, study: StudySet) -> dict:
    assisted = study.assisted_for(record.group)
    items = []
    for item in study.items:
        is_assisted = item.item_id in assisted
        items.append(
            {
                "item_id": item.item_id,
                "text": item.text,
                "assisted": is_assisted,
                "assist": item.assist_payload() if is_assisted else None,
            }
        )
    return {
        "session_id": record.session_id,
        "participant_id": record.participant_id,
        "group": record.group,
        "class_options": study.class_options,
        "items": items,
    }


def create_app(
    checkpoint: str | Path | None = None,
    study_path: str | Path | None = None,
    store_dir: str | Path | None = None,
    static_dir: str | Path | None = None,
    clock=None,
) -> FastAPI:
    app = FastAPI(title="conceptproto service")

    pipeline: Pipeline | None = None
    if checkpoint is not None:
        pipeline = Pipeline.from_checkpoint(checkpoint)
        log.info("loaded checkpoint from %s", checkpoint)

    store: SessionStore | None = None
    if study_path is not None:
        study = load_study_set(study_path) if not isinstance(study_path, StudySet) else study_path
        if store_dir is None:
            raise DataError("a session store directory is required with a study set")
        kwargs = {"clock": clock} if clock is not None else {}
        store = SessionStore(store_dir, study, **kwargs)

    app.state.pipeline = pipeline
    app.state.store = store

    @app.post("/api/predict")
    def predict(body: PredictBody):
        if app.state.pipeline is None:
            return _error(503, "no model loaded")
        text = body.text
        if not text or not text.strip():
            return _error(400, "text must be non-empty")
        doc = Document(
            id=hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest(),
            text=text,
            label=None,
            split="test",
            sentences=split_sentences(text),
        )
        if not doc.sentences:
            return _error(400, "text contains no sentences")
        explanation = explain(app.state.pipeline, doc)
        return Response(
            content=json.dumps(explanation.to_dict(), sort_keys=True),
            media_type="application/json",
        )

    @app.post("/api/sessions", status_code=201)
    def create_session(body: SessionBody):
        if app.state.store is None:
            return _error(409, "no study set configured")
        try:
            record = app.state.store.create_session(body.participant_id, body.group)
        except StudyBadRequest as exc:
            return _error(400, str(exc))
        return _session_payload(record, app.state.store.study)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        if app.state.store is None:
            return _error(409, "no study set configured")
        try:
            record = app.state.store.get(session_id)
        except StudyNotFound as exc:
            return _error(404, str(exc))
        return record.to_dict()

    @app.post("/api/sessions/{session_id}/responses", status_code=201)
    def post_response(session_id: str, body: ResponseBody):
        if app.state.store is None:
            return _error(409, "no study set configured")
        try:
            response = app.state.store.record_response(
                session_id, body.item_id, body.label, body.confidence, body.elapsed_ms
            )
        except StudyNotFound as exc:
            return _error(404, str(exc))
        except StudyConflict as exc:
            return _error(409, str(exc))
        except StudyBadRequest as exc:
            return _error(400, str(exc))
        record = app.state.store.get(session_id)
        return {"recorded": response.to_dict(), "session_status": record.status}

    @app.get("/api/study/summary")
    def study_summary():
        if app.state.store is None:
            return _error(409, "no study set configured")
        try:
            summary = clean_and_summarize(
                app.state.store.completed_sessions(), app.state.store.study
            )
        except DataError as exc:
            return _error(409, str(exc))
        return summary.to_dict()

    @app.get("/api/study/export")
    def study_export():
        if app.state.store is None:
            return _error(409, "no study set configured")
        return PlainTextResponse(app.state.store.export_csv(), media_type="text/csv")

    @app.get("/api/health")
    def health():
        return {
            "model_loaded": app.state.pipeline is not None,
            "study_configured": app.state.store is not None,
        }

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app


def run_server(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:  # pragma: no cover
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
