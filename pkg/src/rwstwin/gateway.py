"""Motion gateway: pointer operations, joint jogs, Cartesian linear moves
solved through the IK pipeline, and DO control, all forwarded to the
controller. Also hosts the solver's stream-socket service mode.
"""

from __future__ import annotations

import json
import logging
import math
import socket
import socketserver
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import requests

from . import kinematics as kin
from . import wire
from .twin import RwsClient, TwinClient

log = logging.getLogger(__name__)

SETTLE_TOL_DEG = 0.05
TICKET_POLL_S = 0.01
DEFAULT_MAX_LINEAR_STEP_MM = 300.0
FRESHNESS_LIMIT_MS = 100.0


class GatewayError(Exception):
    pass


class ControllerUnavailable(GatewayError):
    pass


class CommandRejected(GatewayError):
    """Pre-send validation failure (limits, unreachable target, bad input)."""


class GatewayBusy(GatewayError):
    """The cycle program owns the arm, or another motion is in flight."""


class StaleState(GatewayError):
    """Twin data too old to plan from; retry after the streams catch up."""


@dataclass(frozen=True)
class JogCommand:
    joints_deg: tuple[float, float, float, float, float, float]
    mode: str = "absolute"  # absolute | relative

    def __post_init__(self):
        if self.mode not in ("absolute", "relative"):
            raise CommandRejected(f"unknown jog mode {self.mode!r}")
        if len(self.joints_deg) != 6 or not all(
                math.isfinite(v) for v in self.joints_deg):
            raise CommandRejected("jog needs 6 finite joint values (deg)")


@dataclass(frozen=True)
class LinearCommand:
    delta_mm: tuple[float, float, float]
    keep_orientation: bool = True
    max_step_mm: float = DEFAULT_MAX_LINEAR_STEP_MM

    def __post_init__(self):
        if len(self.delta_mm) != 3 or not all(
                math.isfinite(v) for v in self.delta_mm):
            raise CommandRejected("linear delta needs 3 finite values (mm)")
        if float(np.linalg.norm(self.delta_mm)) > self.max_step_mm:
            raise CommandRejected(
                f"linear step {np.linalg.norm(self.delta_mm):.1f} mm exceeds "
                f"the {self.max_step_mm:.0f} mm single-step limit")


@dataclass
class MotionTicket:
    ticket_id: str
    target_deg: tuple
    status: str = "pending"  # pending | done | failed
    reason: str = ""
    ik_result: kin.IkResult | None = None
    _done: threading.Event = field(default_factory=threading.Event)

    def wait(self, timeout: float | None = None) -> bool:
        return self._done.wait(timeout)

    def _finish(self, status: str, reason: str = ""):
        self.status = status
        self.reason = reason
        self._done.set()


class MotionGateway:
    """One dispatcher per controller: commands are serialized and at most
    one motion ticket is in flight at a time.
    """

    def __init__(self, twin: TwinClient, dh: kin.DhTable | None = None,
                 creds: wire.DigestCredentials | None = None):
        self.twin = twin
        self.dh = dh or twin.dh
        self._client = RwsClient(twin.controller_url, creds or twin.creds)
        self._client_lock = threading.Lock()
        self._dispatch_lock = threading.Lock()
        self._inflight: MotionTicket | None = None
        self.tickets: dict[str, MotionTicket] = {}

    # -- controller plumbing ---------------------------------------------------

    def _post(self, path: str, body=None) -> requests.Response:
        with self._client_lock:
            try:
                return self._client.post(path, json_body=body)
            except requests.RequestException as exc:
                raise ControllerUnavailable(str(exc)) from exc

    def _get(self, path: str) -> requests.Response:
        with self._client_lock:
            try:
                return self._client.get(path)
            except requests.RequestException as exc:
                raise ControllerUnavailable(str(exc)) from exc

    def _cycle_running(self) -> bool:
        resp = self._get(wire.PATH_EXECUTION)
        if resp.status_code != 200:
            raise ControllerUnavailable(f"execution state HTTP {resp.status_code}")
        return bool(resp.json().get("running"))

    # -- control functions --------------------------------------------------------

    def pointer_op(self, action: str) -> dict:
        if action not in ("reset", "resetpp", "start", "stop"):
            raise CommandRejected(f"unknown pointer action {action!r}")
        wire_action = "resetpp" if action in ("reset", "resetpp") else action
        resp = self._post(f"{wire.PATH_EXECUTION}?action={wire_action}")
        if resp.status_code == 409:
            raise GatewayBusy(resp.json().get("error", "execution conflict"))
        if resp.status_code != 200:
            raise GatewayError(f"pointer op failed: HTTP {resp.status_code}")
        return resp.json()

    def set_do(self, name: str, value: int) -> dict:
        resp = self._post(f"{wire.PATH_IOSIGNALS}/{name}?action=set",
                          body={"value": int(value)})
        if resp.status_code != 200:
            raise CommandRejected(resp.json().get("error",
                                                  f"HTTP {resp.status_code}"))
        return resp.json()

    def _current_joints(self, max_age_ms: float | None = None):
        snap = self.twin.state.snapshot()
        if snap.joints_rad is None:
            raise StaleState("no joints sample received yet")
        if max_age_ms is not None:
            age = snap.age_ms(snap.joints_meta)
            if age is None or age > max_age_ms:
                raise StaleState(f"joints sample is {age:.0f} ms old")
        return snap

    def jog(self, cmd: JogCommand, ik_result: kin.IkResult | None = None) -> MotionTicket:
        snap = self._current_joints()
        current_deg = np.degrees(snap.joints_rad)
        if cmd.mode == "relative":
            target_deg = current_deg + np.array(cmd.joints_deg)
        else:
            target_deg = np.array(cmd.joints_deg, dtype=float)

        # validate limits before anything is sent
        for i, (v, (lo, hi)) in enumerate(zip(np.radians(target_deg),
                                              self.dh.joint_limits)):
            if not (lo - 1e-12 <= v <= hi + 1e-12):
                raise CommandRejected(
                    f"joint {i + 1} target {target_deg[i]:.2f} deg outside "
                    f"[{math.degrees(lo):.1f}, {math.degrees(hi):.1f}] deg")

        with self._dispatch_lock:
            if self._inflight is not None and self._inflight.status == "pending":
                raise GatewayBusy("another motion is in flight")
            if self._cycle_running():
                raise GatewayBusy("cycle program owns the arm; stop it first")
            resp = self._post(f"{wire.PATH_SYMBOL_JTARGET}?action=set",
                              body={"value": [float(v) for v in target_deg]})
            if resp.status_code == 400:
                raise CommandRejected(resp.json().get("error", "rejected"))
            if resp.status_code != 200:
                raise GatewayError(f"symbol update failed: HTTP {resp.status_code}")
            ticket = MotionTicket(ticket_id=uuid.uuid4().hex,
                                  target_deg=tuple(float(v) for v in target_deg),
                                  ik_result=ik_result)
            self.tickets[ticket.ticket_id] = ticket
            self._inflight = ticket

        delta = np.abs(np.radians(target_deg) - snap.joints_rad)
        nominal_s = float(np.max(delta / np.array(self.dh.joint_speed_limits)))
        # 2x nominal duration plus a constant floor so near-zero moves have
        # time for one polling round trip
        timeout_s = 2.0 * nominal_s + 1.0
        threading.Thread(target=self._watch_settle, args=(ticket, timeout_s),
                         daemon=True).start()
        return ticket

    def _watch_settle(self, ticket: MotionTicket, timeout_s: float):
        deadline = time.monotonic() + timeout_s
        target = np.array(ticket.target_deg)
        while time.monotonic() < deadline:
            snap = self.twin.state.snapshot()
            if snap.joints_rad is not None:
                err = np.abs(np.degrees(snap.joints_rad) - target)
                if np.all(err <= SETTLE_TOL_DEG):
                    ticket._finish("done")
                    return
            time.sleep(TICKET_POLL_S)
        ticket._finish("failed", f"did not settle within {timeout_s:.2f} s")

    def linear_move(self, cmd: LinearCommand) -> MotionTicket:
        snap = self._current_joints(max_age_ms=FRESHNESS_LIMIT_MS)
        # base the move on FK of the same joints sample that seeds the
        # solver; the tcp stream is sampled independently and may be older
        base = kin.forward_kinematics(self.dh, snap.joints_rad)
        target = kin.Pose(position=base.position + np.array(cmd.delta_mm),
                          orientation=base.orientation)
        problem = kin.IkProblem(target=target, seed=snap.joints_rad)
        result = kin.solve_ik(self.dh, problem)
        if not result.converged:
            raise CommandRejected(
                f"IK did not converge: pos_err={result.pos_err:.3f} mm "
                f"orient_err={result.orient_err:.5f} rad "
                f"after {result.iterations} iterations")
        solution_deg = tuple(float(v) for v in np.degrees(result.solution))
        return self.jog(JogCommand(joints_deg=solution_deg, mode="absolute"),
                        ik_result=result)


# -- solver socket service ---------------------------------------------------------

def solve_request(dh: kin.DhTable, request: dict) -> dict:
    """Shared by the socket service and in-process callers so both produce
    identical replies for identical requests.
    """
    target_raw = request.get("target")
    seed_raw = request.get("seed")
    if not isinstance(target_raw, dict) or "pos" not in target_raw \
            or "quat" not in target_raw:
        raise wire.ProtocolError("target", "target needs pos and quat")
    if not isinstance(seed_raw, list) or len(seed_raw) != 6:
        raise wire.ProtocolError("seed", "seed must be 6 joint values (deg)")
    target = kin.Pose(position=np.array(target_raw["pos"], dtype=float),
                      orientation=np.array(target_raw["quat"], dtype=float))
    seed = np.radians(np.array(seed_raw, dtype=float))
    result = kin.solve_ik(dh, kin.IkProblem(target=target, seed=seed))
    return {
        "solution": [float(v) for v in np.degrees(result.solution)],
        "converged": result.converged,
        "iterations": result.iterations,
        "pos_err_mm": result.pos_err,
    }


class SolverService:
    """Line-delimited JSON IK solver over a stream socket. One request at a
    time per connection; connections are concurrent.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 dh: kin.DhTable | None = None):
        self.dh = dh or kin.irb120_table()
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for line in self.rfile:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        request = json.loads(line)
                        reply = solve_request(outer.dh, request)
                    except json.JSONDecodeError as exc:
                        reply = {"error": f"parse error: {exc.msg}",
                                 "parse_position": exc.pos}
                    except (wire.ProtocolError, kin.KinematicsError,
                            ValueError, TypeError) as exc:
                        reply = {"error": str(exc)}
                    self.wfile.write(json.dumps(reply).encode() + b"\n")
                    self.wfile.flush()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.host, self.port = self._server.server_address

    def start(self) -> "SolverService":
        threading.Thread(target=self._server.serve_forever,
                         kwargs={"poll_interval": 0.05}, daemon=True).start()
        log.info("solver service on %s:%d", self.host, self.port)
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()


def solve_over_socket(host: str, port: int, request: dict,
                      timeout: float = 10.0) -> dict:
    """One-shot client for the solver service."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(json.dumps(request).encode() + b"\n")
        buf = b""
        while not buf.endswith(b"\n"):
            chunk = sock.recv(65536)
            if not chunk:
                break
            buf += chunk
    return json.loads(buf)
