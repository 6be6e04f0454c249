"""WebSocket steering endpoint.

One asyncio server on a background thread. State messages fan out to every
connected client; steer/mode messages land in a thread-safe queue that the
simulation loop drains once per physics tick. Malformed messages are
dropped and counted, never fatal.
"""

from __future__ import annotations

import asyncio
import json
import logging
import queue
import threading

import websockets

log = logging.getLogger(__name__)


class SteeringServer:
    def __init__(self, port: int, host: str = "127.0.0.1"):
        self.port = port
        self.host = host
        self._commands: queue.Queue = queue.Queue()
        self._clients: set = set()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._started = threading.Event()
        self._stop: asyncio.Future | None = None
        self.malformed_count = 0

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._run, name="steering-server",
                                        daemon=True)
        self._thread.start()
        if not self._started.wait(timeout=10.0):
            raise RuntimeError("steering server failed to start")

    def stop(self):
        if self._loop is not None and self._stop is not None:
            self._loop.call_soon_threadsafe(
                lambda: self._stop.set_result(None) if not self._stop.done() else None)
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _run(self):
        asyncio.run(self._serve())

    async def _serve(self):
        self._loop = asyncio.get_running_loop()
        self._stop = self._loop.create_future()
        async with websockets.serve(self._handler, self.host, self.port):
            self._started.set()
            await self._stop

    async def _handler(self, websocket):
        self._clients.add(websocket)
        try:
            async for raw in websocket:
                self._on_message(raw)
        except websockets.ConnectionClosed:
            pass
        finally:
            self._clients.discard(websocket)

    def _on_message(self, raw):
        try:
            msg = json.loads(raw)
            kind = msg["type"]
            if kind == "steer":
                self._commands.put(("steer", float(msg["vx"]), float(msg["vy"])))
            elif kind == "mode":
                value = msg["value"]
                if value not in ("interactive", "scripted"):
                    raise ValueError(value)
                self._commands.put(("mode", value))
            else:
                raise ValueError(kind)
        except (ValueError, KeyError, TypeError) as exc:
            self.malformed_count += 1
            log.debug("dropped malformed steering message: %s", exc)

    # -- simulation-side API ---------------------------------------------------

    def drain_commands(self):
        out = []
        while True:
            try:
                out.append(self._commands.get_nowait())
            except queue.Empty:
                return out

    def push_state(self, state: dict):
        if self._loop is None or not self._clients:
            return
        payload = json.dumps(state, separators=(",", ":"))
        self._loop.call_soon_threadsafe(self._broadcast, payload)

    def _broadcast(self, payload: str):
        for ws in list(self._clients):
            task = asyncio.ensure_future(ws.send(payload))
            task.add_done_callback(_swallow)


def _swallow(task):
    exc = task.exception()
    if exc is not None:
        log.debug("state push failed: %s", exc)
