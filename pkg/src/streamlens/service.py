"""HTTP control plane and push-stream data plane over one engine.

Control mutations go through the engine's lock and land between
instances; reads serve plain-data snapshots. The data plane is a one-way
server-sent-event stream of scored records plus event and run-mark
notifications; a subscriber that stops draining its bounded buffer is
disconnected rather than ever stalling the processing loop.

Every non-2xx response carries ``{"status", "code", "message"}``.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response, StreamingResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from streamlens import __version__
from streamlens.engine import Engine, EngineConfig, EventLabel, InsufficientLabels
from streamlens.ingest import (
    ColumnMapping,
    SourceSpec,
    SyntheticSpec,
    open_source,
    validate_file_source,
)

logger = logging.getLogger(__name__)

KEEPALIVE_SECONDS = 15.0


def api_error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"status": status, "code": code, "message": message},
    )


class _Subscriber:
    __slots__ = ("queue", "dead")

    def __init__(self, buffer: int):
        self.queue: queue.Queue = queue.Queue(maxsize=buffer)
        self.dead = False


class StreamHub:
    """Fan-out of engine notifications to bounded subscriber queues."""

    def __init__(self, buffer: int = 1024):
        self._buffer = buffer
        self._subs: list[_Subscriber] = []
        self._lock = threading.Lock()

    def publish(self, kind: str, payload: dict) -> None:
        data = json.dumps(payload)
        with self._lock:
            for sub in list(self._subs):
                try:
                    sub.queue.put_nowait((kind, data))
                except queue.Full:
                    # Slow consumer: cut it loose, never block the engine.
                    sub.dead = True
                    self._subs.remove(sub)

    def subscribe(self, buffer: int | None = None) -> _Subscriber:
        sub = _Subscriber(buffer if buffer is not None else self._buffer)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subs)


class IngestController:
    """Single active source feeding the engine from a daemon thread."""

    def __init__(self, engine: Engine):
        self._engine = engine
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None
        self.error: str | None = None

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def start(self, spec: SourceSpec) -> bool:
        with self._lock:
            if self.running:
                return False
            self.error = None
            self._thread = threading.Thread(
                target=self._consume, args=(spec,), daemon=True
            )
            self._thread.start()
            return True

    def _consume(self, spec: SourceSpec) -> None:
        try:
            for instance in open_source(spec):
                self._engine.process(instance)
        except Exception as e:  # surfaced via logs; the API stays up
            self.error = str(e)
            logger.warning("ingest stopped: %s", e)

    def join(self, timeout: float | None = None) -> None:
        t = self._thread
        if t is not None:
            t.join(timeout)


def parse_source_spec(d: dict, feature_names) -> SourceSpec:
    kind = d.get("kind")
    if kind == "synthetic":
        return SourceSpec(
            kind="synthetic",
            synthetic=SyntheticSpec.from_dict(d["synthetic"]),
            rate=d.get("rate"),
        )
    mapping = d.get("mapping") or {}
    features = tuple(mapping.get("features") or feature_names)
    return SourceSpec(
        kind=kind or "",
        path=d.get("path"),
        mapping=ColumnMapping(
            timestamp=mapping.get("timestamp", "timestamp"), features=features
        ),
        rate=d.get("rate"),
        impute_last=bool(d.get("impute_last", False)),
    )


def create_app(
    config: EngineConfig | None = None,
    session_dir=None,
    stream_buffer: int = 1024,
    static_dir=None,
) -> FastAPI:
    config = config or EngineConfig()
    engine = Engine(config, session_dir=session_dir)
    hub = StreamHub(buffer=stream_buffer)
    engine.subscribe(hub.publish)
    controller = IngestController(engine)

    app = FastAPI(title="streamlens", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.engine = engine
    app.state.hub = hub
    app.state.controller = controller

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        return api_error(exc.status_code, "http_error", str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return api_error(400, "bad_request", str(exc.errors()[:1]))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/ingest/start", status_code=202)
    async def ingest_start(request: Request):
        try:
            body = await request.json()
            spec = parse_source_spec(body, config.feature_names)
            validate_file_source(spec)
        except (ValueError, KeyError, TypeError, FileNotFoundError) as e:
            return api_error(400, "bad_source_spec", str(e))
        if not controller.start(spec):
            return api_error(409, "ingest_running", "a source is already being consumed")
        return {"status": "started", "kind": spec.kind}

    @app.get("/stream")
    def stream():
        sub = hub.subscribe()

        def gen():
            try:
                while True:
                    if sub.dead:
                        break
                    try:
                        kind, data = sub.queue.get(timeout=KEEPALIVE_SECONDS)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"event: {kind}\ndata: {data}\n\n"
            finally:
                hub.unsubscribe(sub)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/pdp/{feature}")
    def pdp(feature: str):
        try:
            return engine.pdp_snapshot(feature)
        except KeyError:
            return api_error(404, "unknown_feature", f"unknown feature {feature!r}")

    @app.get("/threshold")
    def get_threshold():
        return {"value": engine.threshold}

    @app.put("/threshold")
    async def put_threshold(request: Request):
        try:
            body = await request.json()
            engine.set_threshold(float(body["value"]))
        except (ValueError, KeyError, TypeError) as e:
            return api_error(400, "bad_threshold", str(e))
        return Response(status_code=204)

    @app.put("/features/{name}")
    async def put_feature(name: str, request: Request):
        try:
            body = await request.json()
            enabled = bool(body["enabled"])
        except (ValueError, KeyError, TypeError) as e:
            return api_error(400, "bad_request", str(e))
        try:
            j = engine.feature_index(name)
        except KeyError:
            return api_error(404, "unknown_feature", f"unknown feature {name!r}")
        try:
            engine.set_feature_enabled(j, enabled)
        except ValueError as e:
            return api_error(409, "last_feature", str(e))
        return Response(status_code=204)

    @app.get("/events")
    def events():
        out = []
        for ev in engine.coalesce_events():
            d = ev.to_dict()
            verdict = None
            for label in engine.labels:
                if label.from_id <= ev.to_id and label.to_id >= ev.from_id:
                    verdict = label.verdict
            d["label"] = verdict
            out.append(d)
        return {"events": out}

    @app.post("/labels", status_code=201)
    async def post_label(request: Request):
        try:
            body = await request.json()
            label = EventLabel.from_dict(body)
            stored = engine.label_event(label)
        except (ValueError, KeyError, TypeError) as e:
            return api_error(400, "bad_label", str(e))
        return {"label": stored.to_dict()}

    @app.get("/threshold/suggestion")
    def threshold_suggestion():
        try:
            return {"value": engine.suggest_threshold()}
        except InsufficientLabels as e:
            return api_error(409, "insufficient_labels", str(e))

    @app.post("/runs/mark", status_code=201)
    async def post_mark(request: Request):
        try:
            body = await request.json()
        except ValueError:
            body = {}
        mark = engine.mark_run_boundary(str(body.get("note", "")))
        return {"mark": mark.to_dict()}

    @app.get("/snapshot")
    def snapshot(last_n: int = 1000):
        return engine.snapshot(last_n=last_n)

    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if bundled.is_dir():
            static_dir = bundled
    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
