"""Live session service: one session at a time, pushed to subscribers as frames.

Wire protocol (JSON frames over a WebSocket):
  client -> server: {"type": "subscribe", "after_seq": n}
                    {"type": "submit_query", "text": "..."}
                    {"type": "start"} | {"type": "pause"} | {"type": "resume"}
  server -> client: {"type": "hello", ...}                     (per-connection)
                    {"type": "query_accepted", "query_id", "text"}
                    {"type": "error", "code", "message"}       (per-connection)
                    {"type": "chunk" | "query_admitted" | "trigger_decided"
                           | "answered" | "stream_ended", "seq": n, "t": s, ...}

Broadcast frames carry a server-assigned monotone seq and mirror transcript
event payloads field-for-field; the UI is a pure projection of them. A
subscriber may reconnect and resume with after_seq; the server replays every
buffered frame above it, so no gap survives a reconnect.
"""

from __future__ import annotations

import asyncio
import json
import socket
import threading
import time
from dataclasses import dataclass

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import SessionConfig
from .errors import MissingInput, PortInUse
from .gateway import build_gateway
from .ingestion import open_source
from .runtime import (
    Event,
    QueueQueryFeed,
    WallClock,
    build_embedder,
    build_pipeline,
    run_session,
)

FRAME_TYPE_BY_EVENT = {
    "chunk_committed": "chunk",
    "query_admitted": "query_admitted",
    "trigger_decided": "trigger_decided",
    "answered": "answered",
    "stream_ended": "stream_ended",
}


@dataclass
class _Subscriber:
    queue: asyncio.Queue
    last_sent_seq: int = -1


class LiveSession:
    """Owns the runtime thread and the replayable frame buffer."""

    def __init__(self, config: SessionConfig, time_scale: float | None = None):
        self.config = config
        self.time_scale = time_scale if time_scale is not None else config.time_scale
        self.feed = QueueQueryFeed()
        self.frames: list[dict] = []
        self.stream_now: float = 0.0
        self.state = "ready"  # ready | running | done | failed
        self.error: Exception | None = None
        self._lock = threading.Lock()
        self._subscribers: list[_Subscriber] = []
        self._loop: asyncio.AbstractEventLoop | None = None
        self._pause = threading.Event()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def bind_loop(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop

    # --- frame fan-out ---

    def _on_event(self, event: Event) -> None:
        frame = {"type": FRAME_TYPE_BY_EVENT[event.type], "seq": event.seq,
                 "t": event.t}
        frame.update(event.payload)
        with self._lock:
            self.frames.append(frame)
            if event.type == "chunk_committed":
                self.stream_now = event.t
            subscribers = list(self._subscribers)
        if self._loop is not None:
            for sub in subscribers:
                self._loop.call_soon_threadsafe(sub.queue.put_nowait, frame)

    def subscribe(self, after_seq: int) -> tuple[_Subscriber, list[dict]]:
        sub = _Subscriber(queue=asyncio.Queue())
        with self._lock:
            backlog = [f for f in self.frames if f["seq"] > after_seq]
            self._subscribers.append(sub)
        return sub, backlog

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    # --- session control ---

    def _paced_source(self):
        spec = self.config.sources.get("default")
        if spec is None:
            raise MissingInput("serve requires a 'source' entry in the config")
        source = open_source(spec, self.config.frames_per_chunk, self.config.fps)
        for chunk in source:
            deadline = time.monotonic() + chunk.duration / self.time_scale
            while not self._stop.is_set():
                if self._pause.is_set():
                    deadline += 0.02
                    time.sleep(0.02)
                    continue
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                time.sleep(min(remaining, 0.02))
            if self._stop.is_set():
                return
            yield chunk

    def _run(self) -> None:
        try:
            gateway = build_gateway(self.config.gateway)
            spec = self.config.sources.get("default")
            run_session(
                self.config,
                self._paced_source(),
                self.feed,
                gateway,
                pipeline=build_pipeline(self.config, gateway, spec),
                embedder=build_embedder(self.config),
                clock=WallClock(),
                subscriber=self._on_event,
            )
            self.state = "done"
        except Exception as exc:  # noqa: BLE001 - surfaced to clients as an error frame
            self.state = "failed"
            self.error = exc
            failure = {"type": "error", "seq": None, "code": "SessionFailed",
                       "message": f"{type(exc).__name__}: {exc}"}
            if self._loop is not None:
                with self._lock:
                    subscribers = list(self._subscribers)
                for sub in subscribers:
                    self._loop.call_soon_threadsafe(sub.queue.put_nowait, failure)

    def start(self) -> bool:
        with self._lock:
            if self.state != "ready":
                return False
            self.state = "running"
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="streamagent-session")
        self._thread.start()
        return True

    def pause(self) -> None:
        self._pause.set()

    def resume(self) -> None:
        self._pause.clear()

    def stop(self) -> None:
        self._stop.set()

    def submit(self, text: str):
        with self._lock:
            arrival = self.stream_now
        return self.feed.submit(text, arrival_time=arrival)

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)


def create_app(session: LiveSession) -> FastAPI:
    app = FastAPI(title="streamagent session service")

    @app.get("/health")
    async def health():
        return {"state": session.state, "frames": len(session.frames)}

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        session.bind_loop(asyncio.get_running_loop())
        with session._lock:
            last_seq = session.frames[-1]["seq"] if session.frames else -1
        await websocket.send_text(json.dumps({
            "type": "hello", "state": session.state, "last_seq": last_seq,
        }))
        sub: _Subscriber | None = None
        sender: asyncio.Task | None = None

        async def pump(s: _Subscriber):
            while True:
                frame = await s.queue.get()
                if frame.get("seq") is not None and frame["seq"] <= s.last_sent_seq:
                    continue
                await websocket.send_text(json.dumps(frame))
                if frame.get("seq") is not None:
                    s.last_sent_seq = frame["seq"]

        async def send_error(code: str, message: str):
            await websocket.send_text(json.dumps(
                {"type": "error", "code": code, "message": message}))

        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    frame = json.loads(raw)
                    if not isinstance(frame, dict) or "type" not in frame:
                        raise ValueError("frame must be an object with a 'type'")
                except ValueError as exc:
                    await send_error("BadFrame", str(exc))
                    continue
                kind = frame["type"]
                if kind == "subscribe":
                    after_seq = frame.get("after_seq", -1)
                    if not isinstance(after_seq, int):
                        await send_error("BadFrame", "after_seq must be an integer")
                        continue
                    if sub is not None:
                        session.unsubscribe(sub)
                        if sender:
                            sender.cancel()
                    sub, backlog = session.subscribe(after_seq)
                    sub.last_sent_seq = after_seq
                    for item in backlog:
                        if item["seq"] > sub.last_sent_seq:
                            await websocket.send_text(json.dumps(item))
                            sub.last_sent_seq = item["seq"]
                    sender = asyncio.create_task(pump(sub))
                elif kind == "submit_query":
                    text = frame.get("text", "")
                    if not isinstance(text, str) or not text.strip():
                        await send_error("EmptyQuery", "query text must be non-empty")
                        continue
                    if session.state not in ("ready", "running"):
                        await send_error("SessionOver", "session is not accepting queries")
                        continue
                    query = session.submit(text.strip())
                    await websocket.send_text(json.dumps({
                        "type": "query_accepted", "query_id": query.query_id,
                        "text": query.text,
                    }))
                elif kind == "start":
                    if not session.start():
                        await send_error("AlreadyStarted",
                                         f"session state is {session.state}")
                elif kind == "pause":
                    session.pause()
                elif kind == "resume":
                    session.resume()
                else:
                    await send_error("BadFrame", f"unknown frame type {kind!r}")
        except WebSocketDisconnect:
            pass
        finally:
            if sender:
                sender.cancel()
            if sub is not None:
                session.unsubscribe(sub)

    return app


def serve_forever(config: SessionConfig, host: str, port: int,
                  time_scale: float | None = None) -> int:
    import uvicorn

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(f"{host}:{port} is already bound: {exc}") from exc
    finally:
        probe.close()
    session = LiveSession(config, time_scale=time_scale)
    app = create_app(session)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    session.stop()
    return 0
