"""Live service surface: one simulation owner thread, many viewers.

The cell runs in a dedicated thread, paced by a speed governor (real-time
multiple or flat out); pacing never touches simulated timestamps.  Clients
connect over a WebSocket and receive JSON snapshot frames coalesced to at
most ~30 per second; their commands funnel into the kernel's single
ordered queue, where an E-stop always applies before anything else queued
in the same tick.

Wire protocol (text frames, JSON, versioned with ``"v": 1``):

* server -> client: ``{"type": "snapshot", "v": 1, ...}`` (see
  ``WorkCell.snapshot`` for the field set);
* client -> server: ``{"type": "command", "kind": "start", "params": {},
  "client_id": "panel-1"}`` with kind one of ``start``, ``stop``,
  ``estop``, ``estop_release``, ``reset``, ``door_open``, ``door_close``,
  ``inject``;
* error reply: ``{"type": "error", "v": 1, "message": "..."}`` (the
  connection stays open).
"""

from __future__ import annotations

import asyncio
import json
import threading
import time

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .simkernel import Scenario, WorkCell
from .simkernel.cell import Phase

COMMAND_KINDS = frozenset(
    {"start", "stop", "estop", "estop_release", "reset", "door_open", "door_close", "inject"}
)

SNAPSHOT_INTERVAL_S = 1.0 / 30.0


class SimController:
    """Owns the cell and its thread; fans immutable snapshots out to clients."""

    def __init__(self, scenario: Scenario, speed: float | None = 1.0, log_path=None):
        self.cell = WorkCell(scenario)
        self.speed = speed  # None means as fast as possible
        self.log_path = log_path
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._subscribers: set[asyncio.Queue] = set()
        self._lock = threading.Lock()
        self.latest_frame = json.dumps(self.cell.snapshot(), separators=(",", ":"))
        self.finished = threading.Event()

    # -- lifecycle ------------------------------------------------------

    def start(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop
        self._thread = threading.Thread(target=self._run, name="sim-loop", daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        if self.log_path is not None:
            self.cell.log.write(self.log_path)

    # -- client side ----------------------------------------------------

    def subscribe(self, queue: asyncio.Queue) -> None:
        with self._lock:
            self._subscribers.add(queue)

    def unsubscribe(self, queue: asyncio.Queue) -> None:
        with self._lock:
            self._subscribers.discard(queue)

    def enqueue(self, kind: str, params: dict, client_id: str) -> None:
        self.cell.enqueue_command(kind, params, client_id)
        self._wake.set()

    # -- simulation thread ----------------------------------------------

    def _publish(self) -> None:
        frame = json.dumps(self.cell.snapshot(), separators=(",", ":"))
        self.latest_frame = frame
        if self._loop is None:
            return
        with self._lock:
            queues = list(self._subscribers)
        for queue in queues:
            self._loop.call_soon_threadsafe(_offer_latest, queue, frame)

    def _run(self) -> None:
        cell = self.cell
        wall_start = time.monotonic()
        sim_start = cell.now_us
        last_publish = 0.0
        parked = False
        while not self._stop.is_set():
            if parked:
                # Batch is parked; wait for operator commands instead of spinning.
                self._wake.wait(timeout=0.2)
                self._wake.clear()
                if self._stop.is_set():
                    break
                if not cell._commands:
                    continue
                parked = False
                self.finished.clear()
                wall_start = time.monotonic()
                sim_start = cell.now_us
            busy = cell.step_tick()
            if cell.terminal:
                # Mirror the headless run exactly, including the closing record.
                cell.emit_run_end(cell.stop_reason())
                parked = True
                self.finished.set()
                self._publish()
                continue
            if cell.time_limit_reached():
                cell.log.emit(cell.now_us, "kernel", "time_limit", {
                    "limit_us": cell.scenario.time_limit_us,
                })
                cell.emit_run_end("time_limit")
                parked = True
                self.finished.set()
                self._publish()
                continue
            now_wall = time.monotonic()
            if now_wall - last_publish >= SNAPSHOT_INTERVAL_S:
                self._publish()
                last_publish = now_wall
            cell.advance_clock(self.speed is None, busy)
            if self.speed is not None and self.speed > 0:
                target = wall_start + (cell.now_us - sim_start) / 1_000_000.0 / self.speed
                delay = target - time.monotonic()
                while delay > 0 and not self._stop.is_set():
                    if self._wake.wait(timeout=min(delay, 0.05)):
                        self._wake.clear()
                        break
                    delay = target - time.monotonic()


def _offer_latest(queue: asyncio.Queue, frame: str) -> None:
    # Coalesce: a slow client only ever sees the newest frame.
    if queue.full():
        try:
            queue.get_nowait()
        except asyncio.QueueEmpty:
            pass
    queue.put_nowait(frame)


def _error_frame(message: str) -> str:
    return json.dumps({"type": "error", "v": 1, "message": message}, separators=(",", ":"))


def build_app(controller: SimController) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app):
        controller.start(asyncio.get_running_loop())
        try:
            yield
        finally:
            controller.shutdown()

    app = FastAPI(title="work-cell gateway", lifespan=lifespan)
    app.state.controller = controller

    @app.get("/")
    async def index():
        return {
            "service": "work-cell gateway",
            "v": 1,
            "websocket": "/ws",
            "snapshot": json.loads(controller.latest_frame),
        }

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        queue: asyncio.Queue = asyncio.Queue(maxsize=1)
        controller.subscribe(queue)
        await websocket.send_text(controller.latest_frame)

        async def pump_snapshots():
            while True:
                frame = await queue.get()
                await websocket.send_text(frame)

        sender = asyncio.create_task(pump_snapshots())
        try:
            while True:
                text = await websocket.receive_text()
                try:
                    message = json.loads(text)
                except json.JSONDecodeError:
                    await websocket.send_text(_error_frame("frame is not valid JSON"))
                    continue
                if not isinstance(message, dict) or message.get("type") != "command":
                    await websocket.send_text(_error_frame("expected a command frame"))
                    continue
                kind = message.get("kind")
                if kind not in COMMAND_KINDS:
                    await websocket.send_text(_error_frame(f"unknown command kind {kind!r}"))
                    continue
                params = message.get("params") or {}
                if not isinstance(params, dict):
                    await websocket.send_text(_error_frame("params must be an object"))
                    continue
                controller.enqueue(kind, params, str(message.get("client_id", "")))
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            controller.unsubscribe(queue)

    return app


def serve(scenario: Scenario, port: int, host: str = "127.0.0.1",
          speed: float | None = 1.0, log_path=None) -> None:
    """Run the gateway until interrupted (blocking)."""
    import uvicorn

    controller = SimController(scenario, speed=speed, log_path=log_path)
    app = build_app(controller)
    uvicorn.run(app, host=host, port=port, log_level="warning")
