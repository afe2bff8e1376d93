"""HTTP session API for live interactive parsing.

Sessions live in memory (one lock each; requests on a session are
serialized) and append one transcript line to the session log when they
finish. The API surface is deliberately small: create a session, answer
its questions, read it back, list tables.
"""
from __future__ import annotations

import threading
import uuid
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .agent import AgentConfig, InteractiveSession
from .detector import DetectorConfig
from .minidb import ExecutionError, TableStore, execute
from .nlg import QuestionGenerator
from .parser import HeuristicParser, PerturbationConfig
from .sqlast import query_to_dict, render_sql

TABLE_PREVIEW_ROWS = 3


class CreateSessionRequest(BaseModel):
    question: str
    table_id: str
    config: Optional[dict] = None


class AnswerRequest(BaseModel):
    answer: str


def config_from_overrides(base: AgentConfig, overrides: Optional[dict]) -> AgentConfig:
    if not overrides:
        return base
    kind = overrides.get("detector", base.detector.kind)
    perturbation = base.detector.perturbation or PerturbationConfig()
    if "n_passes" in overrides or "drop_rate" in overrides:
        perturbation = PerturbationConfig(
            n_passes=int(overrides.get("n_passes", perturbation.n_passes)),
            drop_rate=float(overrides.get("drop_rate", perturbation.drop_rate)),
            seed=int(overrides.get("seed", perturbation.seed)),
        )
    detector = DetectorConfig(
        kind=kind,
        p_star=overrides.get("p_star", base.detector.p_star if kind == "prob" else None),
        s_star=overrides.get("s_star", base.detector.s_star if kind == "dropout" else None),
        perturbation=perturbation if kind == "dropout" else None,
    )
    return AgentConfig(
        k_alternatives=int(overrides.get("k", base.k_alternatives)),
        detector=detector,
        mode=overrides.get("mode", base.mode),
        seed=int(overrides.get("seed", base.seed)),
    )


class SessionHolder:
    def __init__(self, session: InteractiveSession):
        self.session = session
        self.lock = threading.Lock()


def build_app(
    store: TableStore,
    parser: Any = None,
    config: Optional[AgentConfig] = None,
    transcript_log: Optional[Path] = None,
) -> FastAPI:
    parser = parser if parser is not None else HeuristicParser()
    base_config = config or AgentConfig(detector=DetectorConfig(kind="prob", p_star=0.95))
    nlg = QuestionGenerator()
    sessions: dict = {}
    log_lock = threading.Lock()

    app = FastAPI(title="sqlclarify", version="0.1.0")
    # the browser console may be served from another origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    def _final_payload(session: InteractiveSession) -> dict:
        query = session.final_query
        payload: dict = {"sql": render_sql(query), "query": query_to_dict(query)}
        try:
            result = execute(query, store)
            payload["rows"] = [list(r) for r in result.rows]
            payload["columns"] = list(result.columns)
        except ExecutionError as exc:
            payload["rows"] = None
            payload["columns"] = None
            payload["execution_error"] = str(exc)
        return payload

    def _state_response(session_id: str, session: InteractiveSession) -> dict:
        out = {
            "session_id": session_id,
            "status": "done" if session.done else "asking",
            "partial_sql": render_sql(session.final_query) if session.done else session.partial_sql(),
        }
        if session.done:
            out["final"] = _final_payload(session)
        else:
            out["question"] = session.pending.question
        return out

    def _log_if_done(session: InteractiveSession) -> None:
        if session.done and transcript_log is not None:
            with log_lock:
                with open(transcript_log, "a", encoding="utf-8") as fh:
                    fh.write(session.transcript.to_json_line() + "\n")

    @app.post("/api/sessions")
    def create_session(request: CreateSessionRequest) -> dict:
        if not request.question.strip():
            raise HTTPException(status_code=422, detail={"code": "empty_question"})
        if request.table_id not in store:
            raise HTTPException(status_code=404, detail={"code": "table_not_found", "table_id": request.table_id})
        try:
            session_config = config_from_overrides(base_config, request.config)
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail={"code": "bad_config", "error": str(exc)}) from None
        session_id = uuid.uuid4().hex
        session = InteractiveSession(
            parser,
            nlg,
            store.get(request.table_id),
            request.question,
            session_config,
            example_id=session_id,
        )
        sessions[session_id] = SessionHolder(session)
        _log_if_done(session)
        return _state_response(session_id, session)

    def _holder(session_id: str) -> SessionHolder:
        holder = sessions.get(session_id)
        if holder is None:
            raise HTTPException(status_code=404, detail={"code": "session_not_found"})
        return holder

    @app.post("/api/sessions/{session_id}/answer")
    def submit_answer(session_id: str, request: AnswerRequest) -> dict:
        holder = _holder(session_id)
        if request.answer not in ("yes", "no"):
            raise HTTPException(status_code=422, detail={"code": "invalid_answer", "answer": request.answer})
        with holder.lock:
            if holder.session.done:
                raise HTTPException(status_code=409, detail={"code": "session_closed"})
            holder.session.answer(request.answer)
            _log_if_done(holder.session)
            return _state_response(session_id, holder.session)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        holder = _holder(session_id)
        with holder.lock:
            session = holder.session
            out = _state_response(session_id, session)
            out["question_text"] = session.ctx.question
            out["table_id"] = session.table.id
            out["early_exit"] = session.transcript.early_exit
            out["events"] = [e.to_dict() for e in session.transcript.events]
            return out

    @app.get("/api/tables")
    def list_tables(rows: int = TABLE_PREVIEW_ROWS) -> list:
        limit = max(0, rows)
        out = []
        for table in store.tables.values():
            out.append(
                {
                    "id": table.id,
                    "name": table.name,
                    "columns": [{"name": c.name, "type": c.type} for c in table.columns],
                    "preview_rows": [list(r) for r in table.rows[:limit]],
                }
            )
        return out

    return app
