"""HTTP controller emulator: serves the wire-protocol resources behind
digest auth and runs the workcell simulation on a real-time tick loop.
"""

from __future__ import annotations

import io
import json
import logging
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import wire
from .kinematics import DhTable
from .workcell import (DEFAULT_TICK_S, ExecutionConflict, LimitViolation,
                       SignalError, WorkcellConfig, WorkcellSim)

log = logging.getLogger(__name__)


@dataclass
class EmulatorConfig:
    port: int = 8880
    host: str = "127.0.0.1"
    tick_s: float = DEFAULT_TICK_S
    camera_delay_ms: float = 0.0
    credentials: wire.DigestCredentials = None  # type: ignore[assignment]
    workcell: WorkcellConfig = None  # type: ignore[assignment]
    dh: DhTable = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.credentials is None:
            self.credentials = wire.DigestCredentials()
        if self.workcell is None:
            self.workcell = WorkcellConfig()


@dataclass
class _Sample:
    """State published atomically once per tick; every data GET serves the
    latest one, so jointtarget and robtarget with equal seq are the same
    sim state and FK(joints) == tcp exactly.
    """
    seq: int
    timestamp_ms: int
    joints_deg: tuple
    pos: tuple
    orient: tuple
    io_signals: tuple
    phase: str


class Emulator:
    """Owns the sim, its tick thread, and the HTTP server."""

    def __init__(self, config: EmulatorConfig | None = None):
        self.config = config or EmulatorConfig()
        self.sim = WorkcellSim(dh=self.config.dh, config=self.config.workcell)
        self.auth = wire.DigestAuthenticator(self.config.credentials)
        self._lock = threading.RLock()
        self._epoch_ms = time.time() * 1000.0
        self._sample: _Sample = self._publish()
        self._stop = threading.Event()
        self._tick_thread: threading.Thread | None = None
        self._httpd: ThreadingHTTPServer | None = None

    # -- simulation ------------------------------------------------------------

    def _publish(self) -> _Sample:
        sim = self.sim
        pose = sim.tcp_pose()
        sample = _Sample(
            seq=sim.tick_count,
            timestamp_ms=int(self._epoch_ms + sim.sim_time_ms),
            joints_deg=sim.joints_deg(),
            pos=tuple(float(v) for v in pose.position),
            orient=tuple(float(v) for v in pose.orientation),
            io_signals=tuple(sim.io.values()),
            phase=sim.phase.value,
        )
        self._sample = sample
        return sample

    def tick(self, dt: float | None = None):
        with self._lock:
            self.sim.tick(dt if dt is not None else self.config.tick_s)
            self._publish()

    def _tick_loop(self):
        period = self.config.tick_s
        next_t = time.monotonic()
        while not self._stop.is_set():
            self.tick()
            next_t += period
            delay = next_t - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_t = time.monotonic()  # fell behind; don't burst

    # -- lifecycle ---------------------------------------------------------------

    def start(self):
        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer((self.config.host, self.config.port),
                                          handler)
        self._httpd.daemon_threads = True
        self.config.port = self._httpd.server_address[1]
        self._tick_thread = threading.Thread(target=self._tick_loop, daemon=True)
        self._tick_thread.start()
        threading.Thread(target=self._httpd.serve_forever,
                         kwargs={"poll_interval": 0.05}, daemon=True).start()
        log.info("emulator listening on %s:%d", self.config.host, self.config.port)
        return self

    def stop(self):
        self._stop.set()
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._tick_thread is not None:
            self._tick_thread.join(timeout=2)

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.config.port}"

    # -- request-side state access -------------------------------------------------

    def latest_sample(self) -> _Sample:
        with self._lock:
            return self._sample

    def spylog(self, since: int) -> wire.SpyLogMsg:
        with self._lock:
            events, next_since = self.sim.spylog_read(since)
            events = tuple(
                wire.SpyLogEvent(seq=e.seq,
                                 timestamp_ms=int(self._epoch_ms + e.timestamp_ms),
                                 level=e.level, text=e.text)
                for e in events)
        return wire.SpyLogMsg(events=events, next_since=next_since)

    def execution_state(self) -> dict:
        with self._lock:
            sim = self.sim
            return {"running": sim.running, "pointer_at_main": sim.pointer_at_main,
                    "phase": sim.phase.value, "cycle_count": sim.cycle_count}

    def execution_action(self, action: str):
        with self._lock:
            if action == "resetpp":
                self.sim.resetpp()
            elif action == "start":
                self.sim.start()
            elif action == "stop":
                self.sim.stop()
            else:
                raise wire.ProtocolError("action", f"unknown action {action!r}")
            self._publish()

    def symbol_update(self, joints_deg):
        with self._lock:
            self.sim.jog_to(joints_deg)

    def io_set(self, name: str, value: int):
        with self._lock:
            self.sim.io_set(name, value)
            self._publish()

    def camera_frame(self) -> bytes:
        """Placeholder camera panel: the current phase rendered as text."""
        from PIL import Image, ImageDraw
        with self._lock:
            phase = self.sim.phase.value
            cycles = self.sim.cycle_count
        img = Image.new("RGB", (320, 240), (24, 24, 32))
        draw = ImageDraw.Draw(img)
        draw.text((20, 100), f"phase: {phase}", fill=(220, 220, 220))
        draw.text((20, 130), f"cycles: {cycles}", fill=(160, 160, 160))
        buf = io.BytesIO()
        img.save(buf, format="JPEG")
        return buf.getvalue()


def _make_handler(emu: Emulator):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # tiny responses at 60+ Hz: Nagle + delayed ACK would add ~40 ms
        disable_nagle_algorithm = True

        def log_message(self, fmt, *args):  # quiet; pacing is 60+ req/s
            pass

        # -- plumbing --------------------------------------------------------

        def _send(self, code: int, body: bytes,
                  content_type: str = "application/json",
                  extra: dict | None = None):
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            for k, v in (extra or {}).items():
                self.send_header(k, v)
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, code: int, obj: dict):
            self._send(code, json.dumps(obj).encode())

        def _authenticate(self) -> bool:
            ok, stale = emu.auth.verify(self.command, self.path,
                                        self.headers.get("Authorization"))
            if ok:
                return True
            challenge = emu.auth.challenge(stale=stale)
            self._send(401, b'{"error":"unauthorized"}',
                       extra={"WWW-Authenticate": challenge})
            return False

        def _camera_stall(self):
            # the busy camera starves the controller; data responses are
            # delayed while recognition runs
            if emu.config.camera_delay_ms > 0 and emu.sim.camera_busy:
                time.sleep(emu.config.camera_delay_ms / 1000.0)

        # -- GET ----------------------------------------------------------------

        def do_GET(self):
            if not self._authenticate():
                return
            url = urlparse(self.path)
            try:
                if url.path == wire.PATH_JOINTTARGET:
                    self._camera_stall()
                    s = emu.latest_sample()
                    msg = wire.JointTargetMsg(joints=s.joints_deg, seq=s.seq,
                                              timestamp_ms=s.timestamp_ms)
                    self._send(200, msg.encode())
                elif url.path == wire.PATH_ROBTARGET:
                    self._camera_stall()
                    s = emu.latest_sample()
                    msg = wire.RobTargetMsg(pos=s.pos, orient=s.orient, seq=s.seq,
                                            timestamp_ms=s.timestamp_ms)
                    self._send(200, msg.encode())
                elif url.path == wire.PATH_IOSIGNALS:
                    self._camera_stall()
                    s = emu.latest_sample()
                    msg = wire.IoSnapshotMsg(signals=s.io_signals, seq=s.seq,
                                             timestamp_ms=s.timestamp_ms)
                    self._send(200, msg.encode())
                elif url.path == wire.PATH_SPYLOG:
                    since = int(parse_qs(url.query).get("since", ["0"])[0])
                    self._send(200, emu.spylog(since).encode())
                elif url.path == wire.PATH_EXECUTION:
                    self._send_json(200, emu.execution_state())
                elif url.path == "/camera.jpg":
                    self._send(200, emu.camera_frame(), content_type="image/jpeg")
                else:
                    self._send_json(404, {"error": f"no such resource {url.path}"})
            except Exception as exc:  # noqa: BLE001 - emulator must stay up
                log.exception("GET %s failed", self.path)
                self._send_json(500, {"error": str(exc)})

        # -- POST ----------------------------------------------------------------

        def do_POST(self):
            # drain the body before any (401) response so the keep-alive
            # connection stays in sync for the signed retry
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length) if length else b"{}"
            if not self._authenticate():
                return
            url = urlparse(self.path)
            action = parse_qs(url.query).get("action", [""])[0]
            try:
                if url.path == wire.PATH_EXECUTION:
                    try:
                        emu.execution_action(action)
                        self._send_json(200, {"ok": True})
                    except ExecutionConflict as exc:
                        self._send_json(409, {"error": str(exc)})
                elif url.path == wire.PATH_SYMBOL_JTARGET and action == "set":
                    try:
                        obj = json.loads(body)
                        value = obj["value"]
                        if (not isinstance(value, list) or len(value) != 6
                                or not all(isinstance(v, (int, float)) and
                                           np.isfinite(v) for v in value)):
                            raise wire.ProtocolError("value",
                                                     "value must be 6 finite numbers")
                        emu.symbol_update(value)
                        self._send_json(200, {"ok": True})
                    except LimitViolation as exc:
                        self._send_json(400, {"error": str(exc),
                                              "joint": exc.joint_index + 1})
                elif url.path.startswith(wire.PATH_IOSIGNALS + "/") and action == "set":
                    name = url.path[len(wire.PATH_IOSIGNALS) + 1:]
                    obj = json.loads(body)
                    if "value" not in obj:
                        raise wire.ProtocolError("value")
                    try:
                        emu.io_set(name, int(obj["value"]))
                        self._send_json(200, {"ok": True})
                    except SignalError as exc:
                        code = 404 if exc.reason == "not-found" else 403
                        self._send_json(code, {"error": str(exc)})
                else:
                    self._send_json(404, {"error": f"no such resource {url.path}"})
            except (wire.ProtocolError, json.JSONDecodeError, KeyError,
                    TypeError, ValueError) as exc:
                self._send_json(400, {"error": str(exc)})
            except Exception as exc:  # noqa: BLE001
                log.exception("POST %s failed", self.path)
                self._send_json(500, {"error": str(exc)})

    return Handler


def serve(config: EmulatorConfig) -> Emulator:
    """Start an emulator; raises OSError if the port cannot be bound."""
    return Emulator(config).start()
