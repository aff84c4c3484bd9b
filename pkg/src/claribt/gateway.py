"""HTTP gateway: drives one run in a background thread and exposes its state,
event log, dialogue answers and live scene edits.

State reads are lock-free for callers: the executor publishes an immutable
snapshot dict once per tick and /state hands out the current one, so its hash
only ever changes at tick boundaries. Interactively the loop holds between
ticks while a question waits for an operator answer; scripted runs never wait.
"""
from __future__ import annotations

import os
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .bt import BTNode, TreeParseError, _node_from_doc
from .config import Config, DEFAULT_CONFIG
from .executor import AnswerRejected, Executor, events_to_jsonl
from .world import scene_from_doc


class RunActive(Exception):
    pass


class RunService:
    """Lifecycle of the single live run behind the gateway."""

    def __init__(self, config: Config = DEFAULT_CONFIG):
        self.config = config
        self.executor: Optional[Executor] = None
        self.thread: Optional[threading.Thread] = None
        self.pace = 0.0
        self._lock = threading.Lock()
        self._stop = threading.Event()

    def live(self) -> bool:
        return (
            self.thread is not None
            and self.thread.is_alive()
            and self.executor is not None
            and not self.executor.finished
        )

    def start(
        self,
        tree: BTNode,
        scene,
        seed: int = 0,
        answers: Optional[list[dict]] = None,
        pace: float = 0.0,
        config: Optional[Config] = None,
    ) -> Executor:
        with self._lock:
            if self.live():
                raise RunActive("a run is already in progress")
            cfg = config or self.config
            self.executor = Executor(tree, scene, config=cfg, seed=seed, answers=answers)
            self.pace = max(0.0, float(pace))
            self._stop.clear()
            self.thread = threading.Thread(target=self._loop, daemon=True)
            self.thread.start()
            return self.executor

    def _loop(self) -> None:
        ex = self.executor
        while not ex.finished and not self._stop.is_set():
            # hold for the operator's answer, but wake when a scene edit
            # arrives: the edit may remove the ambiguity the question is about
            while (
                ex.question_outstanding()
                and not ex.has_pending_edits()
                and not self._stop.is_set()
            ):
                time.sleep(0.02)
            if self._stop.is_set():
                break
            ex.step()
            if self.pace:
                time.sleep(self.pace)

    def stop(self) -> None:
        self._stop.set()
        if self.thread is not None:
            self.thread.join(timeout=5.0)


def _tree_from_doc(doc) -> BTNode:
    return _node_from_doc(doc, "$", set())


def _find_frontend(explicit=None) -> Optional[Path]:
    candidates = [
        explicit,
        os.environ.get("CLARIBT_FRONTEND"),
        Path.cwd() / "frontend" / "dist",
        Path(__file__).resolve().parents[2] / "frontend" / "dist",
    ]
    for cand in candidates:
        if cand and Path(cand).is_dir():
            return Path(cand)
    return None


def create_app(service: Optional[RunService] = None, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="claribt gateway")
    svc = service or RunService()
    app.state.service = svc

    @app.get("/state")
    def state() -> JSONResponse:
        ex = svc.executor
        if ex is None:
            return JSONResponse({"status": "idle", "tick": 0, "finished": False, "live": False})
        doc = dict(ex.state_document())
        doc["live"] = svc.live()
        return JSONResponse(doc)

    @app.get("/events")
    def events(after: int = Query(0, ge=0)) -> PlainTextResponse:
        ex = svc.executor
        log = ex.events[after:] if ex is not None else []
        return PlainTextResponse(events_to_jsonl(log), media_type="application/x-ndjson")

    @app.get("/tree")
    def tree():
        ex = svc.executor
        if ex is None:
            raise HTTPException(status_code=404, detail="no run loaded")
        return ex.tree_doc()

    @app.post("/run", status_code=202)
    def run(payload: dict = Body(...)):
        try:
            tree_node = _tree_from_doc(payload["tree"])
            scene = scene_from_doc(payload["scene"])
        except (KeyError, TypeError, ValueError, TreeParseError) as exc:
            raise HTTPException(status_code=422, detail=f"bad run request: {exc}")
        try:
            svc.start(
                tree_node,
                scene,
                seed=int(payload.get("seed", 0)),
                answers=payload.get("answers"),
                pace=float(payload.get("pace", svc.pace)),
            )
        except RunActive as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=f"bad run request: {exc}")
        return {"started": True}

    @app.post("/dialogue/answer", status_code=202)
    def answer(payload: dict = Body(...)):
        word = str(payload.get("answer", "")).lower()
        if word not in ("yes", "no"):
            raise HTTPException(status_code=422, detail='answer must be "yes" or "no"')
        ex = svc.executor
        if ex is None:
            raise HTTPException(status_code=409, detail="no run in progress")
        try:
            ex.submit_answer(word == "yes")
        except AnswerRejected as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"accepted": True}

    def _queue_edit(doc: dict):
        ex = svc.executor
        if ex is None or ex.finished:
            raise HTTPException(status_code=409, detail="no run in progress")
        ex.queue_edit(doc)
        return {"accepted": True}

    @app.post("/scene/objects", status_code=202)
    def add_object(payload: dict = Body(...)):
        for key in ("id", "category", "position"):
            if key not in payload:
                raise HTTPException(status_code=422, detail=f"object needs {key!r}")
        return _queue_edit({"op": "add", "object": payload})

    @app.patch("/scene/objects/{object_id}", status_code=202)
    def move_object(object_id: str, payload: dict = Body(...)):
        if "position" not in payload:
            raise HTTPException(status_code=422, detail="move needs a position")
        return _queue_edit({"op": "move", "id": object_id, "position": payload["position"]})

    @app.delete("/scene/objects/{object_id}", status_code=202)
    def remove_object(object_id: str):
        # object_id may also be a frame name; resolved when the edit applies
        return _queue_edit({"op": "remove", "id": object_id})

    dist = _find_frontend(frontend_dir)
    if dist is not None:
        app.mount("/", StaticFiles(directory=str(dist), html=True), name="console")
    return app
