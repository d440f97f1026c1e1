"""Browser-facing proxy: aggregates twin state behind plain JSON endpoints,
pushes live updates over server-sent events, and forwards control commands
to the motion gateway. Controller credentials never leave this process.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlparse

import numpy as np

from . import wire
from .gateway import (CommandRejected, ControllerUnavailable, GatewayBusy,
                      GatewayError, JogCommand, LinearCommand, MotionGateway,
                      MotionTicket, StaleState)
from .twin import TwinClient, WindowStats

log = logging.getLogger(__name__)

STREAM_CADENCE_S = 0.05
HEARTBEAT_S = 2.0
METRICS_WINDOWS = 120


def _window_dict(w: WindowStats) -> dict:
    return {"period_ms": w.period_ms, "window_count": w.window_count,
            "max_period_ms": w.max_period_ms, "ewma_period_ms": w.ewma_period_ms,
            "warmup": w.warmup, "wall_time_s": w.wall_time_s, "phase": w.phase}


class ProxyServer:
    def __init__(self, twin: TwinClient, gateway: MotionGateway,
                 host: str = "127.0.0.1", port: int = 8780,
                 static_dir: str | None = None,
                 stream_cadence_s: float = STREAM_CADENCE_S):
        self.twin = twin
        self.gateway = gateway
        self.host = host
        self.port = port
        self.static_dir = Path(static_dir) if static_dir else None
        self.stream_cadence_s = stream_cadence_s
        self._httpd: ThreadingHTTPServer | None = None

    # -- views ----------------------------------------------------------------

    def state_view(self) -> dict:
        snap = self.twin.state.snapshot()
        view: dict = {
            "connection": snap.connection,
            "connection_reason": snap.connection_reason,
            "phase": snap.phase,
            "joints": None, "tcp": None, "io": None,
        }
        if snap.joints_rad is not None and snap.joints_meta is not None:
            view["joints"] = {
                "deg": [float(v) for v in np.degrees(snap.joints_rad)],
                "seq": snap.joints_meta.seq,
                "age_ms": snap.age_ms(snap.joints_meta),
            }
        if snap.tcp is not None and snap.tcp_meta is not None:
            view["tcp"] = {
                "pos": [float(v) for v in snap.tcp.position],
                "quat": [float(v) for v in snap.tcp.orientation],
                "seq": snap.tcp_meta.seq,
                "age_ms": snap.age_ms(snap.tcp_meta),
            }
        if snap.io is not None:
            view["io"] = {
                "signals": [{"name": s.name, "kind": s.kind, "value": s.value}
                            for s in snap.io.signals],
                "seq": snap.io.seq,
            }
        view["events"] = [
            {"kind": e.kind, "detail": e.detail, "timestamp_ms": e.timestamp_ms,
             "source_signals": list(e.source_signals)}
            for e in snap.events[-100:]]
        view["spylog"] = [
            {"seq": e.seq, "timestamp_ms": e.timestamp_ms, "level": e.level,
             "text": e.text}
            for e in snap.spylog[-200:]]
        stats = self.twin.refresh_stats(include_warmup=True)
        view["metrics"] = {
            name: _window_dict(windows[-1]) if windows else None
            for name, windows in stats.items()}
        return view

    def metrics_view(self) -> dict:
        stats = self.twin.refresh_stats(include_warmup=True)
        return {name: [_window_dict(w) for w in windows[-METRICS_WINDOWS:]]
                for name, windows in stats.items()}

    # -- commands ----------------------------------------------------------------

    def _register(self, ticket: MotionTicket) -> MotionTicket:
        self.gateway.tickets[ticket.ticket_id] = ticket
        return ticket

    def dispatch_command(self, body: dict) -> MotionTicket:
        kind = body.get("kind")
        if kind == "pointer":
            action = body.get("action")
            if action not in ("reset", "start", "stop"):
                raise CommandRejected("pointer action must be reset|start|stop")
            self.gateway.pointer_op(action)
            return self._register(_instant_ticket("done"))
        if kind == "do":
            name, value = body.get("name"), body.get("value")
            if not isinstance(name, str) or value not in (0, 1):
                raise CommandRejected("do command needs name and value 0|1")
            self.gateway.set_do(name, value)
            return self._register(_instant_ticket("done"))
        if kind == "jog":
            joints = body.get("joints_deg")
            mode = body.get("mode", "absolute")
            if not isinstance(joints, list) or len(joints) != 6:
                raise CommandRejected("jog needs joints_deg with 6 values")
            return self.gateway.jog(JogCommand(joints_deg=tuple(joints), mode=mode))
        if kind == "linear":
            delta = body.get("delta_mm")
            if not isinstance(delta, list) or len(delta) != 3:
                raise CommandRejected("linear needs delta_mm with 3 values")
            return self.gateway.linear_move(LinearCommand(delta_mm=tuple(delta)))
        raise CommandRejected(f"unknown command kind {kind!r}")

    # -- lifecycle -----------------------------------------------------------------

    def start(self) -> "ProxyServer":
        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer((self.host, self.port), handler)
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        threading.Thread(target=self._httpd.serve_forever,
                         kwargs={"poll_interval": 0.05}, daemon=True).start()
        log.info("proxy listening on %s:%d", self.host, self.port)
        return self

    def stop(self):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"


def _instant_ticket(status: str, reason: str = "") -> MotionTicket:
    t = MotionTicket(ticket_id=uuid.uuid4().hex, target_deg=())
    t._finish(status, reason)
    return t


def _make_handler(proxy: ProxyServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        disable_nagle_algorithm = True

        def log_message(self, fmt, *args):
            pass

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _send_json(self, code: int, obj: dict):
            body = json.dumps(obj).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            path = urlparse(self.path).path
            try:
                if path == "/api/state":
                    view = proxy.state_view()
                    if view["connection"] == "down":
                        self._send_json(503, {"error": "twin is down",
                                              "reason": view["connection_reason"]})
                    else:
                        self._send_json(200, view)
                elif path == "/api/metrics":
                    self._send_json(200, proxy.metrics_view())
                elif path == "/api/stream":
                    self._stream()
                elif path.startswith("/api/ticket/"):
                    self._ticket(path.rsplit("/", 1)[-1])
                elif path == "/api/camera.jpg":
                    self._camera()
                else:
                    self._static(path)
            except BrokenPipeError:
                pass
            except Exception as exc:  # noqa: BLE001 - proxy must stay up
                log.exception("GET %s failed", self.path)
                try:
                    self._send_json(500, {"error": str(exc)})
                except Exception:  # noqa: BLE001
                    pass

        def _ticket(self, ticket_id: str):
            t = proxy.gateway.tickets.get(ticket_id)
            if t is None:
                self._send_json(404, {"error": f"no ticket {ticket_id}"})
                return
            self._send_json(200, {"ticket": t.ticket_id, "status": t.status,
                                  "reason": t.reason,
                                  "target_deg": list(t.target_deg)})

        def _camera(self):
            resp = proxy.gateway._get("/camera.jpg")
            body = resp.content
            self.send_response(resp.status_code)
            self.send_header("Content-Type",
                             resp.headers.get("Content-Type", "image/jpeg"))
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            self.end_headers()
            self.wfile.write(body)

        def _stream(self):
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self._cors()
            self.end_headers()
            last_heartbeat = time.monotonic()
            # full snapshot first, then latest-wins updates at the cadence:
            # a slow client simply skips intermediate states, so per-client
            # memory stays one snapshot
            try:
                while True:
                    view = proxy.state_view()
                    payload = json.dumps(view)
                    self.wfile.write(f"event: state\ndata: {payload}\n\n".encode())
                    self.wfile.flush()
                    now = time.monotonic()
                    if now - last_heartbeat >= HEARTBEAT_S:
                        self.wfile.write(b"event: heartbeat\ndata: {}\n\n")
                        self.wfile.flush()
                        last_heartbeat = now
                    time.sleep(proxy.stream_cadence_s)
            except (BrokenPipeError, ConnectionResetError):
                return

        def _static(self, path: str):
            if proxy.static_dir is None:
                if path == "/":
                    body = (b"<html><body><h1>rwstwin proxy</h1>"
                            b"<p>No console bundle configured; the API lives "
                            b"under /api/.</p></body></html>")
                    self.send_response(200)
                    self.send_header("Content-Type", "text/html")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
                self._send_json(404, {"error": "not found"})
                return
            rel = "index.html" if path == "/" else path.lstrip("/")
            target = (proxy.static_dir / rel).resolve()
            root = proxy.static_dir.resolve()
            if not str(target).startswith(str(root)) or not target.is_file():
                self._send_json(404, {"error": "not found"})
                return
            body = target.read_bytes()
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            path = urlparse(self.path).path
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b"{}"
            if path != "/api/command":
                self._send_json(404, {"error": "not found"})
                return
            try:
                body = json.loads(raw)
                if not isinstance(body, dict):
                    raise CommandRejected("command body must be a JSON object")
                ticket = proxy.dispatch_command(body)
                self._send_json(202, {"ticket": ticket.ticket_id,
                                      "status": ticket.status})
            except (json.JSONDecodeError, CommandRejected, wire.ProtocolError) as exc:
                self._send_json(400, {"error": str(exc)})
            except GatewayBusy as exc:
                self._send_json(409, {"error": str(exc)})
            except StaleState as exc:
                self._send_json(503, {"error": str(exc), "retry_after_ms": 200})
            except (ControllerUnavailable, GatewayError) as exc:
                self._send_json(503, {"error": str(exc)})
            except Exception as exc:  # noqa: BLE001
                log.exception("POST %s failed", self.path)
                self._send_json(500, {"error": str(exc)})

    return Handler
