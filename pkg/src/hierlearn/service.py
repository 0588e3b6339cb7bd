"""HTTP session service: the annotation loop over JSON endpoints.

One logical writer per session: mutating requests take the session's lock
in arrival order, reads serve the latest committed state. An optional
shared token (HIERLEARN_TOKEN) gates all endpoints.
"""

from __future__ import annotations

import os
import threading
from collections import defaultdict
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .inference import InferenceConfig, Question, QuestionKind
from .querying import PoolExhaustedError, SelectionMode, SelectionPolicy
from .session import (
    BudgetExhaustedError,
    DEFAULT_TEMPLATE,
    MalformedRecordError,
    SessionStore,
    VoteBatch,
    create_session,
    import_answers,
    next_question,
    posterior_report,
    record_insert,
    record_votes,
)
from .tree_dist import ConceptDomain

TOKEN_ENV = "HIERLEARN_TOKEN"


class CreateSessionBody(BaseModel):
    concepts: list[str]
    root_label: str = "root"
    budget: int = 100
    policy_mode: str = "worst_case_gain"
    allow_repeats: bool = True
    votes_per_question: int = 8
    uncertainty_threshold: float = 0.75
    question_template: str = DEFAULT_TEMPLATE
    config: dict = Field(default_factory=dict)
    session_id: str | None = None


class VotesBody(BaseModel):
    kind: str = "path"
    i: int
    j: int
    votes: list[int]


class InsertBody(BaseModel):
    label: str


class ImportBody(BaseModel):
    content: str | None = None
    path: str | None = None


def create_app(store: SessionStore | None = None, frontend_dir=None) -> FastAPI:
    store = store or SessionStore()
    app = FastAPI(title="hierlearn session service")
    locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
    cache: dict[str, object] = {}

    def check_token(request: Request):
        token = os.environ.get(TOKEN_ENV)
        if token and request.headers.get("authorization") != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or bad token")

    def get_state(session_id: str):
        if session_id not in cache:
            try:
                cache[session_id] = store.load(session_id)
            except KeyError:
                raise HTTPException(status_code=404, detail="unknown session")
        return cache[session_id]

    @app.post("/sessions", dependencies=[Depends(check_token)])
    def create(body: CreateSessionBody):
        try:
            domain = ConceptDomain(tuple(body.concepts), body.root_label)
            cfg = InferenceConfig(**body.config)
            policy = SelectionPolicy(
                SelectionMode(body.policy_mode), body.allow_repeats
            )
            state = create_session(
                domain,
                cfg,
                policy,
                body.budget,
                session_id=body.session_id,
                votes_per_question=body.votes_per_question,
                uncertainty_threshold=body.uncertainty_threshold,
                question_template=body.question_template,
            )
            store.create(state)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        cache[state.id] = state
        return {"id": state.id, "n": domain.n, "budget": state.budget}

    @app.get("/sessions/{session_id}", dependencies=[Depends(check_token)])
    def describe(session_id: str):
        s = get_state(session_id)
        return {
            "id": s.id,
            "concepts": list(s.domain.concepts),
            "root_label": s.domain.root_label,
            "budget": s.budget,
            "answered": len(s.answer_log),
            "votes_per_question": s.votes_per_question,
            "uncertainty_threshold": s.uncertainty_threshold,
            "policy": s.policy.to_dict(),
            "question_template": s.question_template,
        }

    @app.get(
        "/sessions/{session_id}/next-question", dependencies=[Depends(check_token)]
    )
    def ask(session_id: str):
        s = get_state(session_id)
        with locks[session_id]:
            try:
                q = next_question(s)
            except (BudgetExhaustedError, PoolExhaustedError):
                return {"exhausted": True}
        return {
            "exhausted": False,
            "kind": q.kind.value,
            "i": q.i,
            "j": q.j,
            "i_label": s.domain.label(q.i),
            "j_label": s.domain.label(q.j),
            "text": s.question_text(q),
            "remaining_budget": s.budget,
        }

    @app.post("/sessions/{session_id}/votes", dependencies=[Depends(check_token)])
    def votes(session_id: str, body: VotesBody):
        s = get_state(session_id)
        with locks[session_id]:
            try:
                batch = VoteBatch(
                    Question(QuestionKind(body.kind), body.i, body.j),
                    tuple(body.votes),
                )
                outcome = record_votes(store, s, batch)
            except BudgetExhaustedError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        return {
            "answer": outcome.record.answer,
            "gamma": outcome.record.gamma,
            "tie": outcome.tie,
            "applied": outcome.applied,
            "remaining_budget": outcome.remaining_budget,
            "ess": outcome.ess,
        }

    @app.get("/sessions/{session_id}/report", dependencies=[Depends(check_token)])
    def report(session_id: str):
        s = get_state(session_id)
        return posterior_report(s).to_dict()

    @app.post("/sessions/{session_id}/concepts", dependencies=[Depends(check_token)])
    def insert(session_id: str, body: InsertBody):
        s = get_state(session_id)
        with locks[session_id]:
            try:
                record_insert(store, s, body.label)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        return {"n": s.domain.n, "concepts": list(s.domain.concepts)}

    @app.post("/sessions/{session_id}/import", dependencies=[Depends(check_token)])
    def import_file(session_id: str, body: ImportBody):
        s = get_state(session_id)
        with locks[session_id]:
            try:
                if body.content is not None:
                    import tempfile

                    with tempfile.NamedTemporaryFile(
                        "w", suffix=".jsonl", delete=False
                    ) as fh:
                        fh.write(body.content)
                        tmp = fh.name
                    try:
                        count = import_answers(s, tmp)
                    finally:
                        os.unlink(tmp)
                elif body.path is not None:
                    count = import_answers(s, body.path)
                else:
                    raise HTTPException(
                        status_code=422, detail="provide content or path"
                    )
            except MalformedRecordError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            except BudgetExhaustedError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            store.save_snapshot(s)
        return {"imported": count, "remaining_budget": s.budget}

    front = Path(frontend_dir) if frontend_dir else None
    if front and front.exists():
        app.mount("/ui", StaticFiles(directory=front, html=True), name="ui")

        @app.get("/")
        def index():
            return FileResponse(front / "index.html")

    return app
