"""Digital-twin client: request-paced polling threads for the controller's
joint, TCP, I/O and spy-log streams, a snapshot-consistent state store,
abstract-event derivation from I/O edges, and refresh-period telemetry.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np
import requests

from . import kinematics as kin
from . import wire

log = logging.getLogger(__name__)


class TwinAuthError(Exception):
    """Controller rejected our credentials."""


class RwsClient:
    """Digest-authenticated HTTP client for one controller. Not thread-safe;
    each polling loop owns its own instance (the underlying keep-alive
    connection is what makes request pacing fast).
    """

    def __init__(self, base_url: str, creds: wire.DigestCredentials | None = None,
                 timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.creds = creds or wire.DigestCredentials()
        self.timeout = timeout
        self.session = requests.Session()
        self.digest = wire.DigestClientSession(self.creds)

    def request(self, method: str, path: str, json_body=None) -> requests.Response:
        url = self.base_url + path
        resp = None
        for attempt in range(3):
            headers = {}
            if self.digest.has_challenge:
                headers["Authorization"] = self.digest.sign(method, path)
            resp = self.session.request(method, url, json=json_body,
                                        headers=headers, timeout=self.timeout)
            if resp.status_code != 401:
                return resp
            www = resp.headers.get("WWW-Authenticate", "")
            if not www or attempt == 2:
                raise TwinAuthError(f"auth failed for {method} {path}")
            # fresh or stale challenge: take the new nonce and retry once
            self.digest.accept_challenge(www)
        return resp  # pragma: no cover

    def get(self, path: str) -> requests.Response:
        return self.request("GET", path)

    def post(self, path: str, json_body=None) -> requests.Response:
        return self.request("POST", path, json_body=json_body)

    def close(self):
        self.session.close()


# -- abstract events ----------------------------------------------------------

@dataclass(frozen=True)
class AbstractEvent:
    kind: str  # ShapeRecognized | PieceAtB | ConveyorStart | ConveyorStop
    #            GripOn | GripOff | IntegrityWarning
    detail: str
    timestamp_ms: int
    source_signals: tuple[str, ...]


_SHAPE_BY_DO = {"DO_3": "square", "DO_4": "rectangle", "DO_5": "circle"}


def derive_events(prev_io: wire.IoSnapshotMsg | None,
                  next_io: wire.IoSnapshotMsg) -> list[AbstractEvent]:
    """Pure edge detection between two I/O snapshots. Deterministic event
    order: ShapeRecognized, PieceAtB, ConveyorStart/Stop, GripOn/Off.
    """
    if prev_io is None:
        return []
    prev = prev_io.as_dict()
    cur = next_io.as_dict()
    ts = next_io.timestamp_ms
    out: list[AbstractEvent] = []

    def edge(name: str, rising: bool) -> bool:
        if name not in prev or name not in cur:
            return False
        return (prev[name], cur[name]) == ((0, 1) if rising else (1, 0))

    shape_rises = [do for do in _SHAPE_BY_DO if edge(do, rising=True)]
    if len(shape_rises) > 1:
        out.append(AbstractEvent("IntegrityWarning",
                                 "multiple shape outputs rose at once",
                                 ts, tuple(sorted(shape_rises))))
    elif shape_rises:
        do = shape_rises[0]
        out.append(AbstractEvent("ShapeRecognized", _SHAPE_BY_DO[do], ts, (do,)))

    if edge("DI_IR", rising=True):
        out.append(AbstractEvent("PieceAtB", "", ts, ("DI_IR",)))
    if edge("DO_CONVEYOR", rising=True):
        out.append(AbstractEvent("ConveyorStart", "", ts, ("DO_CONVEYOR",)))
    if edge("DO_CONVEYOR", rising=False):
        out.append(AbstractEvent("ConveyorStop", "", ts, ("DO_CONVEYOR",)))
    if edge("DO_GRIP", rising=True):
        out.append(AbstractEvent("GripOn", "", ts, ("DO_GRIP",)))
    if edge("DO_GRIP", rising=False):
        out.append(AbstractEvent("GripOff", "", ts, ("DO_GRIP",)))
    return out


# -- telemetry ------------------------------------------------------------------

@dataclass(frozen=True)
class WindowStats:
    thread: str
    period_ms: float  # 1000 / window_count
    window_count: int
    max_period_ms: float
    ewma_period_ms: float
    warmup: bool
    wall_time_s: float
    phase: str = ""


class ThreadTelemetry:
    """Per-thread GET counter with 1 s windows. The refresh period is the
    reciprocal of the number of requests completed in the window.
    """

    def __init__(self, name: str, window_s: float = 1.0, ewma_alpha: float = 0.3):
        self.name = name
        self.window_s = window_s
        self.ewma_alpha = ewma_alpha
        self.windows: deque[WindowStats] = deque(maxlen=600)
        self._lock = threading.Lock()
        self._reset_window(None)
        self._ewma: float | None = None
        self._warmup_pending = True

    def _reset_window(self, now: float | None):
        self._window_start = now
        self._count = 0
        self._max_gap_ms = 0.0
        self._last_t: float | None = None

    def mark_reconnect(self):
        with self._lock:
            self._warmup_pending = True
            self._reset_window(None)

    def record(self, now: float | None = None, phase: str = ""):
        now = time.monotonic() if now is None else now
        with self._lock:
            if self._window_start is None:
                self._window_start = now
            if self._last_t is not None:
                self._max_gap_ms = max(self._max_gap_ms,
                                       (now - self._last_t) * 1000.0)
            self._last_t = now
            self._count += 1
            if now - self._window_start >= self.window_s:
                self._close_window(now, phase)

    def _close_window(self, now: float, phase: str):
        period = 1000.0 * self.window_s / self._count
        if self._ewma is None:
            self._ewma = period
        else:
            self._ewma += self.ewma_alpha * (period - self._ewma)
        self.windows.append(WindowStats(
            thread=self.name, period_ms=period, window_count=self._count,
            max_period_ms=self._max_gap_ms or period, ewma_period_ms=self._ewma,
            warmup=self._warmup_pending, wall_time_s=time.time(), phase=phase))
        self._warmup_pending = False
        self._reset_window(now)

    def snapshot(self) -> list[WindowStats]:
        with self._lock:
            return list(self.windows)


# -- state store --------------------------------------------------------------

@dataclass
class StreamSample:
    seq: int
    timestamp_ms: int
    recv_monotonic: float


@dataclass
class TwinSnapshot:
    joints_rad: np.ndarray | None
    joints_meta: StreamSample | None
    tcp: kin.Pose | None
    tcp_meta: StreamSample | None
    io: wire.IoSnapshotMsg | None
    events: list[AbstractEvent]
    spylog: list[wire.SpyLogEvent]
    connection: str  # up | degraded | down
    connection_reason: str
    phase: str

    def age_ms(self, meta: StreamSample | None) -> float | None:
        if meta is None:
            return None
        return (time.monotonic() - meta.recv_monotonic) * 1000.0


class TwinStateStore:
    """Single writer per stream, many readers; readers always get a
    consistent copy taken under one lock.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._joints: np.ndarray | None = None
        self._joints_meta: StreamSample | None = None
        self._tcp: kin.Pose | None = None
        self._tcp_meta: StreamSample | None = None
        self._io: wire.IoSnapshotMsg | None = None
        self._events: deque[AbstractEvent] = deque(maxlen=100)
        self._spylog: deque[wire.SpyLogEvent] = deque(maxlen=200)
        self._spy_seen = 0
        self._stream_status: dict[str, str] = {}
        self._reason = ""
        self._phase = ""
        self._joints_listeners: list = []

    def add_joints_listener(self, fn):
        with self._lock:
            self._joints_listeners.append(fn)

    def remove_joints_listener(self, fn):
        with self._lock:
            if fn in self._joints_listeners:
                self._joints_listeners.remove(fn)

    def update_joints(self, msg: wire.JointTargetMsg) -> bool:
        now = time.monotonic()
        with self._lock:
            if self._joints_meta is not None and msg.seq <= self._joints_meta.seq:
                return False
            self._joints = np.radians(np.array(msg.joints))
            self._joints_meta = StreamSample(msg.seq, msg.timestamp_ms, now)
            listeners = list(self._joints_listeners)
            joints = self._joints
        for fn in listeners:
            fn(msg, joints)
        return True

    def update_tcp(self, msg: wire.RobTargetMsg) -> bool:
        now = time.monotonic()
        with self._lock:
            if self._tcp_meta is not None and msg.seq <= self._tcp_meta.seq:
                return False
            self._tcp = kin.Pose(position=np.array(msg.pos),
                                 orientation=np.array(msg.orient))
            self._tcp_meta = StreamSample(msg.seq, msg.timestamp_ms, now)
        return True

    def update_io(self, msg: wire.IoSnapshotMsg) -> list[AbstractEvent]:
        with self._lock:
            prev = self._io
            if prev is not None and msg.seq <= prev.seq:
                return []
            events = derive_events(prev, msg)
            self._io = msg
            self._events.extend(events)
        return events

    def update_spylog(self, msg: wire.SpyLogMsg):
        with self._lock:
            for e in msg.events:
                if e.seq > self._spy_seen:  # at-least-once delivery: dedup
                    self._spy_seen = e.seq
                    self._spylog.append(e)
                    if "phase=" in e.text:
                        self._phase = e.text.split("phase=")[-1].split()[0]

    def set_stream_status(self, stream: str, status: str, reason: str = ""):
        with self._lock:
            self._stream_status[stream] = status
            if reason:
                self._reason = reason

    def snapshot(self) -> TwinSnapshot:
        with self._lock:
            statuses = [self._stream_status.get(s, "down")
                        for s in ("joints", "tcp", "io")]
            if all(s == "up" for s in statuses):
                conn = "up"
            elif any(s == "down" for s in statuses):
                conn = "down"
            else:
                conn = "degraded"
            return TwinSnapshot(
                joints_rad=None if self._joints is None else self._joints.copy(),
                joints_meta=self._joints_meta,
                tcp=self._tcp, tcp_meta=self._tcp_meta, io=self._io,
                events=list(self._events), spylog=list(self._spylog),
                connection=conn, connection_reason=self._reason,
                phase=self._phase)


# -- trajectory recording --------------------------------------------------------

CSV_HEADER = ["t_ms", "j1", "j2", "j3", "j4", "j5", "j6",
              "x", "y", "z", "qw", "qx", "qy", "qz"]


@dataclass
class TrajectoryRow:
    seq: int
    t_ms: int
    joints_deg: tuple
    pose: kin.Pose


class TrajectoryRecorder:
    """Appends one row per accepted joints sample: time, joints, and the
    FK pose computed client-side. Also keeps the raw robtarget stream keyed
    by seq so the two paths can be aligned and compared.
    """

    def __init__(self, dh: kin.DhTable | None = None):
        self.dh = dh or kin.irb120_table()
        self.rows: list[TrajectoryRow] = []
        self.tcp_by_seq: dict[int, kin.Pose] = {}
        self._lock = threading.Lock()

    def on_joints(self, msg: wire.JointTargetMsg, joints_rad: np.ndarray):
        pose = kin.forward_kinematics(self.dh, joints_rad)
        with self._lock:
            self.rows.append(TrajectoryRow(seq=msg.seq, t_ms=msg.timestamp_ms,
                                           joints_deg=msg.joints, pose=pose))

    def on_tcp(self, msg: wire.RobTargetMsg):
        with self._lock:
            self.tcp_by_seq[msg.seq] = kin.Pose(position=np.array(msg.pos),
                                                orientation=np.array(msg.orient))

    def export_csv(self, path: str):
        with self._lock, open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow([r.t_ms, *[f"{j:.6f}" for j in r.joints_deg],
                            *[f"{v:.6f}" for v in r.pose.position],
                            *[f"{v:.9f}" for v in r.pose.orientation]])


# -- the twin ------------------------------------------------------------------

STREAMS = {
    "joints": wire.PATH_JOINTTARGET,
    "tcp": wire.PATH_ROBTARGET,
    "io": wire.PATH_IOSIGNALS,
}

BACKOFF_INITIAL_S = 0.1
BACKOFF_CAP_S = 2.0
DOWN_AFTER_FAILURES = 3


class TwinClient:
    """Runs the polling loops against one controller and owns the state
    store and telemetry. Polling is request-paced: the next GET goes out as
    soon as the previous response lands (plus an optional floor interval).
    """

    def __init__(self, controller_url: str,
                 creds: wire.DigestCredentials | None = None,
                 dh: kin.DhTable | None = None,
                 floor_interval_s: float = 0.0,
                 spylog_interval_s: float = 0.1,
                 enable_spylog: bool = True):
        self.controller_url = controller_url
        self.creds = creds or wire.DigestCredentials()
        self.dh = dh or kin.irb120_table()
        self.floor_interval_s = floor_interval_s
        self.spylog_interval_s = spylog_interval_s
        self.enable_spylog = enable_spylog
        self.state = TwinStateStore()
        self.telemetry: dict[str, ThreadTelemetry] = {
            name: ThreadTelemetry(name) for name in STREAMS}
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._recorder: TrajectoryRecorder | None = None

    # -- lifecycle ----------------------------------------------------------------

    def start(self) -> "TwinClient":
        for name, path in STREAMS.items():
            t = threading.Thread(target=self._poll_loop, args=(name, path),
                                 name=f"twin-{name}", daemon=True)
            t.start()
            self._threads.append(t)
        if self.enable_spylog:
            t = threading.Thread(target=self._spylog_loop, name="twin-spylog",
                                 daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self):
        self._stop.set()
        for t in self._threads:
            t.join(timeout=3)
        self._threads.clear()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # -- polling -------------------------------------------------------------------

    def _handle(self, name: str, body: bytes):
        if name == "joints":
            self.state.update_joints(wire.JointTargetMsg.decode(body))
        elif name == "tcp":
            msg = wire.RobTargetMsg.decode(body)
            self.state.update_tcp(msg)
            rec = self._recorder
            if rec is not None:
                rec.on_tcp(msg)
        elif name == "io":
            self.state.update_io(wire.IoSnapshotMsg.decode(body))

    def _poll_loop(self, name: str, path: str):
        client = RwsClient(self.controller_url, self.creds)
        telemetry = self.telemetry[name]
        failures = 0
        backoff = BACKOFF_INITIAL_S
        try:
            while not self._stop.is_set():
                try:
                    resp = client.get(path)
                    if resp.status_code != 200:
                        raise requests.RequestException(
                            f"HTTP {resp.status_code} on {path}")
                    telemetry.record(phase=self.state.snapshot().phase)
                    self._handle(name, resp.content)
                    if failures >= DOWN_AFTER_FAILURES:
                        telemetry.mark_reconnect()
                    failures = 0
                    backoff = BACKOFF_INITIAL_S
                    self.state.set_stream_status(name, "up")
                    if self.floor_interval_s > 0:
                        self._stop.wait(self.floor_interval_s)
                except TwinAuthError as exc:
                    self.state.set_stream_status(name, "down", f"auth: {exc}")
                    self._stop.wait(backoff)
                    backoff = min(backoff * 2, BACKOFF_CAP_S)
                except (requests.RequestException, wire.ProtocolError) as exc:
                    failures += 1
                    status = ("down" if failures >= DOWN_AFTER_FAILURES
                              else "degraded")
                    self.state.set_stream_status(name, status, str(exc))
                    self._stop.wait(backoff)
                    backoff = min(backoff * 2, BACKOFF_CAP_S)
        finally:
            client.close()

    def _spylog_loop(self):
        client = RwsClient(self.controller_url, self.creds)
        since = 0
        try:
            while not self._stop.is_set():
                try:
                    resp = client.get(f"{wire.PATH_SPYLOG}?since={since}")
                    if resp.status_code == 200:
                        msg = wire.SpyLogMsg.decode(resp.content)
                        self.state.update_spylog(msg)
                        since = msg.next_since
                except (requests.RequestException, wire.ProtocolError,
                        TwinAuthError):
                    pass  # next pass retries; the data loops own liveness
                self._stop.wait(self.spylog_interval_s)
        finally:
            client.close()

    # -- trajectory recording ---------------------------------------------------------

    def start_recording(self) -> TrajectoryRecorder:
        rec = TrajectoryRecorder(self.dh)
        self._recorder = rec
        self.state.add_joints_listener(rec.on_joints)
        return rec

    def stop_recording(self) -> TrajectoryRecorder | None:
        rec, self._recorder = self._recorder, None
        if rec is not None:
            self.state.remove_joints_listener(rec.on_joints)
        return rec

    # -- telemetry views ------------------------------------------------------------

    def refresh_stats(self, include_warmup: bool = False) -> dict[str, list[WindowStats]]:
        out = {}
        for name, tel in self.telemetry.items():
            windows = tel.snapshot()
            if not include_warmup:
                windows = [w for w in windows if not w.warmup]
            out[name] = windows
        return out

    def export_stats_jsonl(self, path: str):
        with open(path, "w") as f:
            for name, windows in self.refresh_stats(include_warmup=True).items():
                for w in windows:
                    f.write(json.dumps({
                        "thread": name, "period_ms": w.period_ms,
                        "window_count": w.window_count,
                        "max_period_ms": w.max_period_ms,
                        "ewma_period_ms": w.ewma_period_ms,
                        "warmup": w.warmup, "wall_time_s": w.wall_time_s,
                        "phase": w.phase}) + "\n")


def mean_period_ms(windows: list[WindowStats]) -> float:
    if not windows:
        return math.nan
    return sum(w.period_ms for w in windows) / len(windows)
