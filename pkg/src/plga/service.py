"""HTTP facade for interactive elicitation sessions.

A session is one pipeline run bound to a human-query port realized over
HTTP: when preference entropy crosses the gate the worker checkpoints at
awaiting_human and exits; posting an answer resumes the (deterministic)
pipeline with the answer pre-bound. Session state is journaled as
append-only JSON-lines and survives restarts.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .catalog import default_catalog
from .experiment import (
    METHODS,
    ExperimentSpec,
    builtin_scenario_ids,
    evaluate,
    generate_dataset,
    infer_preference,
    load_builtin_spec,
    train_policy,
)
from .gateway import LmBackendConfig
from .preference import PreferenceDistribution, PreferenceResolution
from .world import Scene

SESSION_STATES = ("awaiting_delta", "awaiting_human", "resolved", "training", "done", "failed")
_STATE_ORDER = {name: i for i, name in enumerate(SESSION_STATES)}


class _SuspendPipeline(Exception):
    """Raised by the session port to checkpoint at the human boundary."""

    def __init__(self, distribution: PreferenceDistribution):
        super().__init__("awaiting human preference")
        self.distribution = distribution


class SessionPort:
    """Human port backed by the session store: answers arrive out of band."""

    def __init__(self, answer: str | None):
        self._answer = answer

    def ask(self, distribution: PreferenceDistribution, context: str) -> str:
        if self._answer is not None:
            return self._answer
        raise _SuspendPipeline(distribution)


def scene_view(scene: Scene) -> dict:
    catalog = default_catalog()
    return {
        "scene_id": scene.scene_id,
        "grid_dims": list(scene.grid_dims),
        "held_object": scene.held_object,
        "cells": [
            {
                "row": o.cell[0],
                "col": o.cell[1],
                "uid": o.uid,
                "kind": o.kind,
                "texture": o.texture,
                "color": list(catalog.texture_color(o.texture)),
            }
            for o in scene.objects
        ],
    }


@dataclass
class Session:
    id: str
    spec_id: str
    method: str
    seed: int
    state: str = "awaiting_delta"
    pending: dict | None = None  # scene pair views + hypotheses + entropy
    resolution: dict | None = None
    report: dict | None = None
    error: str | None = None
    answer: str | None = None
    answer_token: str | None = None
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "spec_id": self.spec_id,
            "method": self.method,
            "seed": self.seed,
            "state": self.state,
            "pending": self.pending,
            "resolution": self.resolution,
            "report": self.report,
            "error": self.error,
            "answer": self.answer,
            "answer_token": self.answer_token,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_record(cls, data: dict) -> "Session":
        return cls(**data)

    def view(self) -> dict:
        data = self.to_record()
        del data["answer_token"]
        return data


class SessionStore:
    """In-memory index over an append-only JSON-lines journal."""

    def __init__(self, state_dir: str | Path):
        self.dir = Path(state_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.journal = self.dir / "sessions.jsonl"
        self._lock = threading.RLock()
        self._sessions: dict[str, Session] = {}
        if self.journal.exists():
            for line in self.journal.read_text("utf-8").splitlines():
                if line.strip():
                    record = json.loads(line)
                    self._sessions[record["id"]] = Session.from_record(record)

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            return self._sessions.get(session_id)

    def all(self) -> list[Session]:
        with self._lock:
            return list(self._sessions.values())

    def put(self, session: Session) -> None:
        session.updated_at = time.time()
        with self._lock:
            self._sessions[session.id] = session
            with open(self.journal, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(session.to_record()) + "\n")

    def transition(self, session: Session, new_state: str) -> None:
        if new_state != "failed" and _STATE_ORDER[new_state] < _STATE_ORDER[session.state]:
            raise RuntimeError(
                f"illegal session transition {session.state} -> {new_state}"
            )
        session.state = new_state
        self.put(session)


class SessionService:
    def __init__(self, store: SessionStore, backend: LmBackendConfig):
        self.store = store
        self.backend = backend
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def resume_incomplete(self) -> None:
        """Restart workers for sessions interrupted mid-run (deterministic
        pipelines make re-execution equivalent to resumption)."""
        for session in self.store.all():
            if session.state in ("awaiting_delta", "resolved", "training"):
                self.spawn_worker(session)

    def create(self, spec_id: str, method: str, seed: int) -> Session:
        if spec_id not in builtin_scenario_ids():
            raise HTTPException(status_code=404, detail=f"unknown scenario {spec_id!r}")
        if method not in METHODS:
            raise HTTPException(status_code=422, detail=f"unknown method {method!r}")
        session = Session(id=uuid.uuid4().hex[:12], spec_id=spec_id, method=method, seed=seed)
        self.store.put(session)
        self.spawn_worker(session)
        return session

    def answer(self, session_id: str, text: str, token: str | None) -> Session:
        session = self.store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="no such session")
        with self._session_lock(session_id):
            if token is not None and session.answer_token == token and session.answer:
                return session  # idempotent replay of the same submission
            if session.state != "awaiting_human":
                raise HTTPException(
                    status_code=409,
                    detail=f"session is {session.state}, not awaiting_human",
                )
            if not text.strip():
                raise HTTPException(status_code=422, detail="preference text must be non-empty")
            session.answer = text
            session.answer_token = token
            self.store.transition(session, "resolved")
        self.spawn_worker(session)
        return session

    def spawn_worker(self, session: Session) -> threading.Thread:
        thread = threading.Thread(target=self._run, args=(session,), daemon=True)
        thread.start()
        return thread

    def _run(self, session: Session) -> None:
        try:
            spec = load_builtin_spec(session.spec_id)
            dataset = generate_dataset(spec, session.seed)
            log: dict = {}
            try:
                resolution = infer_preference(
                    spec, dataset, session.method, self.backend, SessionPort(session.answer), log
                )
            except _SuspendPipeline as suspend:
                session.pending = self._pending_view(suspend.distribution)
                self.store.transition(session, "awaiting_human")
                return
            if resolution is not None:
                session.resolution = resolution.to_dict()
                if _STATE_ORDER[session.state] < _STATE_ORDER["resolved"]:
                    self.store.transition(session, "resolved")
            if _STATE_ORDER[session.state] < _STATE_ORDER["training"]:
                self.store.transition(session, "training")
            policy = train_policy(spec, dataset, session.method, self.backend, resolution)
            rate = evaluate(policy, spec, session.seed)
            session.report = self._report_view(spec, policy, rate, resolution, session.seed)
            self.store.transition(session, "done")
        except Exception as exc:  # surfaced through the session record
            session.error = f"{type(exc).__name__}: {exc}"
            self.store.transition(session, "failed")

    def _pending_view(self, distribution: PreferenceDistribution) -> dict:
        pending = {
            "hypotheses": [[h.text, h.probability] for h in distribution.hypotheses],
            "entropy": distribution.entropy,
        }
        pair = distribution.source_pair
        if pair is not None:
            pending["scene_a"] = scene_view(pair.pair.tau.initial)
            pending["scene_b"] = scene_view(pair.pair.tau_prime.initial)
            pending["distance"] = pair.pair.distance
        return pending

    def _report_view(
        self,
        spec: ExperimentSpec,
        policy,
        rate: float,
        resolution: PreferenceResolution | None,
        seed: int,
    ) -> dict:
        report = {
            "spec_id": spec.id,
            "results": [
                {
                    "method": policy.method,
                    "success_mean": rate,
                    "success_stderr": 0.0,
                }
            ],
            "theta_hat": resolution.theta_hat if resolution else None,
            "final_loss": policy.model.final_loss,
        }
        if policy.method != "gcbc":
            from .util import stable_seed
            from .world import sample_scene

            scene = sample_scene(
                spec.task_test, spec.profile, True, stable_seed("eval", spec.id, seed, 0)
            )
            mask = policy.encode(scene).reshape(scene.grid_dims[1], scene.grid_dims[0])
            report["mask_preview"] = {
                "scene": scene_view(scene),
                "mask": mask.astype(int).tolist(),
            }
        return report


class CreateSessionBody(BaseModel):
    spec_id: str
    method: str
    seed: int = 0


class AnswerBody(BaseModel):
    preference_text: str
    token: str | None = None


def create_app(
    state_dir: str | Path,
    backend: LmBackendConfig,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="plga session service")
    store = SessionStore(state_dir)
    service = SessionService(store, backend)
    service.resume_incomplete()
    app.state.service = service

    @app.exception_handler(HTTPException)
    async def _http_error(request: Request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": exc.status_code, "message": str(exc.detail)},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"code": 422, "message": str(exc.errors())},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/specs")
    def specs():
        out = []
        for spec_id in builtin_scenario_ids():
            spec = load_builtin_spec(spec_id)
            out.append(
                {
                    "id": spec.id,
                    "section": spec.section,
                    "family": spec.family,
                    "utterance": spec.utterance,
                }
            )
        return out

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = service.create(body.spec_id, body.method, body.seed)
        return session.view()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="no such session")
        return session.view()

    @app.post("/sessions/{session_id}/answer")
    def post_answer(session_id: str, body: AnswerBody):
        session = service.answer(session_id, body.preference_text, body.token)
        return session.view()

    @app.get("/reports/{session_id}")
    def get_report(session_id: str):
        session = store.get(session_id)
        if session is None or session.report is None:
            raise HTTPException(status_code=404, detail="no report for this session")
        return session.report

    if ui_dir is None:
        packaged = Path(__file__).parent / "ui"
        ui_dir = packaged if packaged.is_dir() else None
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
