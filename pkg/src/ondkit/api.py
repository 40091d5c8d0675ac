"""HTTP service over a run directory: status, annotation queue, feedback
ingestion, session triggering, metric history and score histograms.

All mutation goes through POST /api/feedback and POST /api/sessions/train;
everything else is read-only.  One training session may run at a time (409
otherwise), matching the single-writer model of the training loop.
"""

from __future__ import annotations

import os
import threading

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import evalkit, looprunner
from .looprunner import LoopError, SessionState


class FeedbackBody(BaseModel):
    item_id: int
    verdict: str


def _error(status: int, code: str, message: str):
    return HTTPException(status_code=status,
                         detail={"code": code, "message": message})


def create_app(state: SessionState, run_dir: str | None = None,
               console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="ondkit")
    train_lock = threading.Lock()

    def persist():
        if run_dir:
            looprunner.save_state(state, run_dir)

    def ensure_queue():
        nxt = state.session_index + 1
        if not state.queue and state.pending_group is None \
                and nxt < len(state.benchmark.groups):
            looprunner.open_queue(state, nxt)

    ensure_queue()

    @app.exception_handler(HTTPException)
    async def http_exc(request, exc):
        detail = exc.detail if isinstance(exc.detail, dict) else {
            "code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content={"error": detail})

    @app.get("/api/status")
    def status():
        return {
            "session_index": state.session_index,
            "replay_size": state.replay_size,
            "ledger_size": len(state.ledger),
            "pending_items": sum(1 for q in state.queue if q.status == "pending"),
            "method": state.method,
            "trainable_groups": len(state.benchmark.groups),
        }

    @app.get("/api/queue")
    def queue(limit: int = 20):
        items = [q for q in state.queue if q.status == "pending"][:max(limit, 0)]
        return {"items": [{
            "item_id": q.item_id, "verdict": q.verdict, "score": q.score,
            "image_id": q.image_id, "bbox": q.bbox,
        } for q in items]}

    @app.post("/api/feedback")
    def feedback(body: FeedbackBody):
        by_id = {q.item_id: q for q in state.queue}
        item = by_id.get(body.item_id)
        if item is None:
            raise _error(404, "unknown_item", f"no queue item {body.item_id}")
        if item.status != "pending":
            raise _error(409, "duplicate_feedback",
                         f"item {body.item_id} already answered")
        if body.verdict not in (looprunner.ACCEPT, looprunner.REJECT):
            raise _error(422, "bad_verdict", "verdict must be accept or reject")
        recs = looprunner.ingest_human_feedback(
            state, [{"item_id": body.item_id, "verdict": body.verdict}])
        persist()
        return {"resolved_label": recs[0].resolved_label,
                "ledger_size": len(state.ledger)}

    @app.post("/api/sessions/train")
    def train():
        if not train_lock.acquire(blocking=False):
            raise _error(409, "session_running", "a training session is in flight")
        try:
            nxt = state.session_index + 1
            if nxt < len(state.benchmark.groups):
                looprunner.run_session(state, nxt)
            else:
                looprunner.run_replay_session(state)
            ensure_queue()
            persist()
            return {"session_index": state.session_index,
                    "replay_size": state.replay_size}
        except LoopError as e:
            raise _error(409, "loop_error", str(e))
        finally:
            train_lock.release()

    @app.get("/api/sessions/history")
    def history():
        return {"rows": state.history}

    @app.get("/api/scores/histogram")
    def histogram(group: str = "holdout", method: str = ""):
        method = method or state.method
        if group == "holdout":
            recs = state.group_records(state.benchmark.holdout)
        elif group == "seen":
            recs = [state.records[i] for i in state.replay]
        else:
            raise _error(404, "unknown_group", f"group must be holdout or seen, got {group!r}")
        if method == state.method:
            ss = evalkit.model_score(state.model, recs, group=group, method=method)
        elif method in (evalkit.MSP, evalkit.MAXLOGIT, evalkit.ENERGY):
            ss = evalkit.baseline_score_set(recs, method, group=group)
        else:
            raise _error(404, "unknown_method", f"unknown method {method!r}")
        return evalkit.histogram_payload(ss)

    if console_dir and os.path.isdir(console_dir):
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
