"""HTTP interface for live elicitation sessions.

One session per human subject; the operator's client creates a session, then
alternates POSTing feedback and rendering the returned next query. Feedback
handling is synchronous (a working-set posterior refit completes in
interactive time); the throttled full-grid recomputation runs in a background
thread per session and is published atomically, so heatmap reads never block
feedback. Sessions are snapshotted to disk after every trial and reloaded
lazily after a restart.

Wire format is JSON; coordinates are always keyed by dimension name. The
endpoint schemas are documented in docs/api.md with examples.
"""

from __future__ import annotations

import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse, PlainTextResponse

from .acquisition import RoiConfig, roi_mask
from .config import ConfigError, config_from_dict, load_config
from .engine import (
    Session,
    SessionError,
    compute_full_grid,
    session_summary,
    start_session,
    submit_feedback,
)
from .metrics import pair_heatmap, permutation_importance
from .persistence import export_dataset, snapshot_load, snapshot_save
from .simulate import effective_config
from .truth import truth_from_config


class ApiError(Exception):
    def __init__(self, status: int, detail, hint: str | None = None):
        self.status = status
        self.detail = detail
        self.hint = hint
        super().__init__(str(detail))

    def response(self) -> JSONResponse:
        body = {"error": self.detail}
        if self.hint:
            body["hint"] = self.hint
        return JSONResponse(body, status_code=self.status)


@dataclass
class SessionResource:
    """One live session plus its service-level bookkeeping."""

    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    io_lock: threading.Lock = field(default_factory=threading.Lock)
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)
    last_token: str | None = None
    last_response: dict | None = None
    refresh_thread: threading.Thread | None = None


class SessionStore:
    def __init__(self, state_dir: Path | None):
        self.state_dir = state_dir
        self._resources: dict[str, SessionResource] = {}
        self._guard = threading.Lock()

    def create(self, session: Session) -> str:
        sid = uuid.uuid4().hex[:12]
        with self._guard:
            self._resources[sid] = SessionResource(session=session)
        self.persist(sid)
        return sid

    def get(self, sid: str) -> SessionResource:
        with self._guard:
            res = self._resources.get(sid)
        if res is None:
            res = self._load_from_disk(sid)
        if res is None:
            raise ApiError(404, f"unknown session {sid}")
        return res

    def _load_from_disk(self, sid: str) -> SessionResource | None:
        if self.state_dir is None:
            return None
        path = self.state_dir / f"{sid}.json"
        if not path.exists():
            return None
        session = snapshot_load(path)
        with self._guard:
            res = self._resources.setdefault(sid, SessionResource(session=session))
        return res

    def persist(self, sid: str):
        if self.state_dir is None:
            return
        with self._guard:
            res = self._resources.get(sid)
        if res is not None:
            with res.io_lock:
                snapshot_save(res.session, self.state_dir / f"{sid}.json")


def _query_payload(session: Session) -> dict | None:
    if session.pending is None:
        return None
    return session.pending.to_dict(session.space.names)


def _status_payload(session: Session) -> dict:
    cfg = session.config
    payload = {
        "trial": session.trial,
        "phase": session.phase,
        "training_trials": cfg.training_trials,
        "validation_trials": cfg.validation_trials,
        "categories": list(cfg.categories),
        "dims": session.space.to_dict(),
        "query": _query_payload(session),
        "last_action": None,
        "full_grid_trial": None if session.full_grid is None else session.full_grid.trial,
    }
    if session.transcript:
        last = session.transcript[-1]
        payload["last_action"] = {
            "trial": last["trial"],
            "action": last["action"],
            "coords": {
                n: float(c)
                for n, c in zip(session.space.names, session.space.index_to_action(last["action"]))
            },
            "label": last["label"],
            "preference": last.get("preference"),
        }
    if session.full_grid is not None:
        scores = permutation_importance(session.full_grid.means, session.space, seed=cfg.seed)
        payload["feature_importance"] = {
            name: float(s) for name, s in zip(session.space.names, scores)
        }
    if session.finished:
        payload["summary"] = session_summary(session)
    return payload


def create_app(state_dir=None, default_config_path=None, ui_dir=None) -> FastAPI:
    """Build the service; `state_dir` enables snapshot persistence, `ui_dir`
    serves built web-UI assets at /."""
    app = FastAPI(title="roial session service")
    store = SessionStore(Path(state_dir) if state_dir else None)
    if store.state_dir is not None:
        store.state_dir.mkdir(parents=True, exist_ok=True)

    @app.exception_handler(ApiError)
    async def _api_error(_, exc: ApiError):
        return exc.response()

    def _resolve_config(body: dict):
        if body.get("config") is not None:
            raw = body["config"]
            if not isinstance(raw, dict):
                raise ApiError(400, ["config: expected a mapping"])
            try:
                return config_from_dict(raw)
            except ConfigError as exc:
                raise ApiError(400, exc.errors)
        path = body.get("config_path") or default_config_path
        if path is None:
            raise ApiError(400, ["body must carry 'config' (inline) or 'config_path'"])
        try:
            return load_config(path)
        except ConfigError as exc:
            raise ApiError(400, exc.errors)
        except OSError as exc:
            raise ApiError(400, [f"config_path: {exc}"])

    @app.post("/sessions", status_code=201)
    def create_session(body: dict | None = Body(default=None)):
        body = body or {}
        config = _resolve_config(body)
        if body.get("simulated_truth"):
            # headless clients may pin the engine thresholds to the configured truth
            truth = truth_from_config(config.space(), config.kernel, config)
            config = effective_config(config, truth)
        session, query = start_session(config)
        sid = store.create(session)
        return {
            "session_id": sid,
            "query": query.to_dict(session.space.names),
            "categories": list(config.categories),
            "dims": session.space.to_dict(),
        }

    @app.post("/sessions/{sid}/feedback")
    def feedback(sid: str, body: dict = Body(...)):
        res = store.get(sid)
        if not res.lock.acquire(blocking=False):
            raise ApiError(409, "a feedback submission is already in flight for this session")
        try:
            return _handle_feedback(res, sid, body)
        finally:
            res.lock.release()

    def _handle_feedback(res: SessionResource, sid: str, body: dict) -> dict:
        session = res.session
        trial = body.get("trial")
        token = body.get("token") or (f"trial-{trial}" if trial is not None else None)
        if token is not None and token == res.last_token and res.last_response is not None:
            return res.last_response  # idempotent replay, no double ingestion
        if session.finished:
            raise ApiError(422, "session is finished")
        if trial is not None and trial != session.pending.trial:
            raise ApiError(422, f"stale trial {trial}; the pending trial is {session.pending.trial}")
        preference = body.get("preference")
        if preference is not None and not isinstance(preference, str):
            raise ApiError(422, "preference must be 'current', 'previous' or 'skip'")
        boundary = session.trial + 1 == session.config.training_trials
        try:
            session, query = submit_feedback(session, body.get("label"), preference, refresh="defer")
        except SessionError as exc:
            raise ApiError(422, str(exc))
        res.updated = time.time()

        response = {
            "trial": session.trial,
            "phase": session.phase,
            "query": _query_payload(session),
        }
        if boundary and session.phase == "validation":
            response["notice"] = "validation phase"
        if session.finished:
            response["summary"] = session_summary(session)
        res.last_token = token
        res.last_response = response
        _maybe_refresh(res, sid)
        store.persist(sid)
        return response

    def _maybe_refresh(res: SessionResource, sid: str):
        session = res.session
        if session.finished:
            return  # the engine refreshed synchronously at the boundary
        if session.trial % session.config.refresh_every != 0:
            return
        if res.refresh_thread is not None and res.refresh_thread.is_alive():
            return
        at_trial = session.trial

        def work():
            cache = compute_full_grid(session, at_trial=at_trial)
            current = session.full_grid
            if current is None or current.trial < cache.trial:
                session.full_grid = cache  # atomic publish
                store.persist(sid)

        res.refresh_thread = threading.Thread(target=work, daemon=True)
        res.refresh_thread.start()

    def _join_refresh(res: SessionResource):
        if res.refresh_thread is not None and res.refresh_thread.is_alive():
            res.refresh_thread.join()

    @app.get("/sessions/{sid}")
    def status(sid: str):
        return _status_payload(store.get(sid).session)

    @app.get("/sessions/{sid}/posterior")
    def posterior_heatmap(sid: str, pair: str):
        res = store.get(sid)
        session = res.session
        if session.full_grid is None:
            raise ApiError(
                409,
                "no full-grid refresh has completed yet",
                hint=f"retry after trial {session.config.refresh_every}",
            )
        names = session.space.names
        parts = [p.strip() for p in pair.split(",")]
        if len(parts) != 2 or parts[0] == parts[1] or not all(p in names for p in parts):
            raise ApiError(400, f"pair must name two distinct dimensions from {names}")
        cfg = session.config
        grid_roi = roi_mask(
            session.full_grid.means,
            session.full_grid.sigmas,
            RoiConfig(confidence=cfg.confidence, threshold=cfg.thresholds[0]),
        )
        panel = pair_heatmap(
            session.full_grid.means,
            grid_roi,
            session.space,
            names.index(parts[0]),
            names.index(parts[1]),
        )
        panel["refresh_trial"] = session.full_grid.trial
        return panel

    @app.get("/sessions/{sid}/export")
    def export(sid: str, file: str | None = None):
        res = store.get(sid)
        _join_refresh(res)
        with tempfile.TemporaryDirectory() as tmp:
            paths = export_dataset(res.session, tmp)
            by_name = {p.name: p for p in paths}
            if file is None:
                return {"files": sorted(by_name)}
            if file not in by_name:
                raise ApiError(404, f"no export file {file!r}; available: {sorted(by_name)}")
            return PlainTextResponse(by_name[file].read_text(), media_type="text/csv")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
