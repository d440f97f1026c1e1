"""Deterministic workcell simulation: a scripted stacking program (spawn,
recognize, convey, pick, place, return), a velocity-limited joint motion
executor, and the controller I/O table.

The simulation is pure: `tick(dt)` advances it explicitly and there is no
wall clock inside. The HTTP emulator wraps it with a real-time tick loop.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kinematics as kin
from .wire import IoSignal, IoSnapshotMsg, SpyLogEvent


class Phase(str, Enum):
    IDLE = "IDLE"
    SPAWN = "SPAWN"
    RECOGNIZE = "RECOGNIZE"
    CONVEY = "CONVEY"
    AT_B = "AT_B"
    PICK = "PICK"
    PLACE = "PLACE"
    RETURN = "RETURN"


SHAPES = ("square", "rectangle", "circle")
SHAPE_DO = {"square": "DO_3", "rectangle": "DO_4", "circle": "DO_5"}

DEFAULT_TICK_S = 0.004


class SignalError(Exception):
    """Bad I/O signal access; `reason` is 'not-found' or 'forbidden'."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


class ExecutionConflict(Exception):
    """Start requested while the program is already running."""


class LimitViolation(ValueError):
    """A commanded joint target is outside the joint limits."""

    def __init__(self, joint_index: int, value_deg: float, lo_deg: float, hi_deg: float):
        super().__init__(
            f"joint {joint_index + 1} target {value_deg:.2f} deg outside "
            f"[{lo_deg:.1f}, {hi_deg:.1f}] deg")
        self.joint_index = joint_index


@dataclass
class WorkcellConfig:
    spawn_s: float = 0.5
    recognize_s: float = 1.5
    convey_s: float = 2.0
    at_b_s: float = 0.2
    # joint-space waypoints in degrees
    pick_waypoints: tuple[tuple[float, ...], ...] = (
        (25.0, 40.0, 10.0, 0.0, 40.0, 0.0),
        (25.0, 55.0, 15.0, 0.0, 20.0, 0.0),
    )
    place_waypoints: tuple[tuple[float, ...], ...] = (
        (-35.0, 40.0, 10.0, 0.0, 40.0, 0.0),
        (-35.0, 52.0, 18.0, 0.0, 20.0, 0.0),
    )
    home: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class MotionExecutor:
    """FIFO queue of absolute joint targets, advanced by synchronized
    velocity-limited interpolation: all joints arrive at the same time and
    none exceeds its speed limit between ticks.
    """

    def __init__(self, dh: kin.DhTable, start_q: np.ndarray | None = None):
        self.dh = dh
        self.current_q = (np.zeros(6) if start_q is None
                          else dh.clamp(np.asarray(start_q, dtype=float)))
        self.pending: deque[np.ndarray] = deque()
        self.paused = False
        self._speed = np.array(dh.joint_speed_limits)

    @property
    def settled(self) -> bool:
        return not self.pending

    def enqueue(self, target_q: np.ndarray):
        """Queue an absolute target (rad); raises LimitViolation if any
        joint is outside its limit.
        """
        target_q = np.asarray(target_q, dtype=float)
        for i, (qi, (lo, hi)) in enumerate(zip(target_q, self.dh.joint_limits)):
            if not (lo - 1e-12 <= qi <= hi + 1e-12):
                raise LimitViolation(i, math.degrees(qi),
                                     math.degrees(lo), math.degrees(hi))
        self.pending.append(target_q)

    def tick(self, dt: float):
        if self.paused or not self.pending:
            return
        target = self.pending[0]
        delta = target - self.current_q
        ttc = float(np.max(np.abs(delta) / self._speed))
        if ttc <= dt:
            self.current_q = target.copy()
            self.pending.popleft()
        else:
            self.current_q = self.current_q + delta * (dt / ttc)


@dataclass
class Piece:
    shape: str
    location: str  # A | conveyor | B | gripped | pallet_slot


class WorkcellSim:
    """The emulated controller's state: RAPID-like execution pointer, the
    stacking cycle state machine, I/O table, motion executor, and spy log.
    """

    def __init__(self, dh: kin.DhTable | None = None,
                 config: WorkcellConfig | None = None):
        self.dh = dh or kin.irb120_table()
        self.config = config or WorkcellConfig()
        self.motion = MotionExecutor(self.dh,
                                     np.radians(self.config.home))
        self.pointer_at_main = True
        self.running = False
        self.phase = Phase.IDLE
        self.cycle_count = 0
        self.piece: Piece | None = None
        self.pallet: dict[str, int] = {s: 0 for s in SHAPES}
        self.camera_busy = False
        self._shape_index = 0
        self._phase_elapsed = 0.0
        self._convey_progress = 0.0
        self.sim_time_ms = 0.0
        self.tick_count = 0  # doubles as the published sample version

        self.io: dict[str, IoSignal] = {}
        for name in ("DO_3", "DO_4", "DO_5", "DO_GRIP", "DO_CONVEYOR",
                     "DO_6", "DO_7"):
            self.io[name] = IoSignal(name=name, kind="DO", value=0)
        self.io["DI_IR"] = IoSignal(name="DI_IR", kind="DI", value=0)
        self._overrides: set[str] = set()
        self._script_values: dict[str, int] = {
            name: 0 for name, sig in self.io.items() if sig.kind == "DO"}

        self._spylog: list[SpyLogEvent] = []
        self._spy_seq = 0
        self._log("info", "controller ready phase=IDLE")

    # -- spy log -------------------------------------------------------------

    def _log(self, level: str, text: str):
        self._spy_seq += 1
        self._spylog.append(SpyLogEvent(seq=self._spy_seq,
                                        timestamp_ms=int(self.sim_time_ms),
                                        level=level, text=text))
        # bounded ring; clients paginate by seq
        if len(self._spylog) > 5000:
            del self._spylog[:1000]

    def spylog_read(self, since: int) -> tuple[list[SpyLogEvent], int]:
        events = [e for e in self._spylog if e.seq > since]
        return events, (events[-1].seq if events else max(since, self._spy_seq))

    # -- I/O -----------------------------------------------------------------

    def _set_io(self, name: str, value: int):
        sig = self.io[name]
        self.io[name] = IoSignal(name=name, kind=sig.kind, value=value)

    def _script_set(self, name: str, value: int):
        # script writes clear any manual override on that signal
        self._overrides.discard(name)
        self._script_values[name] = value
        self._set_io(name, value)

    def io_set(self, name: str, value: int):
        """Manual DO write (the web-exclusive control). Overrides the
        script until its next phase transition.
        """
        sig = self.io.get(name)
        if sig is None:
            raise SignalError("not-found", f"unknown signal {name!r}")
        if sig.kind != "DO":
            raise SignalError("forbidden", f"{name} is an input; DI writes are forbidden")
        self._set_io(name, 1 if value else 0)
        self._overrides.add(name)
        self._log("info", f"manual io_set {name}={1 if value else 0}")

    def io_snapshot(self, seq: int, timestamp_ms: int) -> IoSnapshotMsg:
        return IoSnapshotMsg(signals=tuple(self.io.values()),
                             seq=seq, timestamp_ms=timestamp_ms)

    # -- execution control -----------------------------------------------------

    def resetpp(self):
        self.pointer_at_main = True
        self.running = False
        self.phase = Phase.IDLE
        self.piece = None
        self.camera_busy = False
        self._phase_elapsed = 0.0
        self._convey_progress = 0.0
        self.motion.pending.clear()
        self.motion.paused = False
        for name in SHAPE_DO.values():
            self._script_set(name, 0)
        self._script_set("DO_CONVEYOR", 0)
        self._script_set("DO_GRIP", 0)
        self._set_io("DI_IR", 0)
        self._log("info", "resetpp phase=IDLE")

    def start(self):
        if self.running:
            raise ExecutionConflict("execution already running")
        self.running = True
        self.pointer_at_main = False
        self.motion.paused = False
        if self.phase == Phase.IDLE:
            self._transition(Phase.SPAWN)
        self._log("info", f"execution started phase={self.phase.value}")

    def stop(self):
        self.running = False
        self.motion.paused = True  # freeze the queue; a jog resumes it
        self._log("info", f"execution stopped phase={self.phase.value}")

    def jog_to(self, target_deg):
        """MoveABSJ via the RAPID symbol-update path. Targets in degrees."""
        target = np.radians(np.asarray(target_deg, dtype=float))
        if target.shape != (6,) or not np.all(np.isfinite(target)):
            raise LimitViolation(0, float("nan"), 0.0, 0.0)
        self.motion.enqueue(target)
        self.motion.paused = False
        self._log("info", "jtarget updated "
                  + ",".join(f"{v:.2f}" for v in np.degrees(target)))

    # -- cycle script ----------------------------------------------------------

    def _transition(self, phase: Phase):
        old = self.phase
        self.phase = phase
        self._phase_elapsed = 0.0
        # the script reasserts control of any manually overridden output
        for name in self._overrides:
            self._set_io(name, self._script_values[name])
        self._overrides.clear()
        cfg = self.config

        if phase == Phase.SPAWN:
            shape = SHAPES[self._shape_index % len(SHAPES)]
            self._shape_index += 1
            self.piece = Piece(shape=shape, location="A")
            for name in SHAPE_DO.values():
                self._script_set(name, 0)
            self._script_set("DO_CONVEYOR", 0)
        elif phase == Phase.RECOGNIZE:
            self.camera_busy = True
        elif phase == Phase.CONVEY:
            self.camera_busy = False
            assert self.piece is not None
            self._script_set(SHAPE_DO[self.piece.shape], 1)
            self._script_set("DO_CONVEYOR", 1)
            self.piece.location = "conveyor"
            self._convey_progress = 0.0
        elif phase == Phase.AT_B:
            self._script_set("DO_CONVEYOR", 0)
            assert self.piece is not None
            self.piece.location = "B"
            self._set_io("DI_IR", 1)
        elif phase == Phase.PICK:
            for wp in cfg.pick_waypoints:
                self.motion.enqueue(np.radians(wp))
        elif phase == Phase.PLACE:
            assert self.piece is not None
            self._script_set("DO_GRIP", 1)
            self.piece.location = "gripped"
            self._set_io("DI_IR", 0)
            for wp in cfg.place_waypoints:
                self.motion.enqueue(np.radians(wp))
        elif phase == Phase.RETURN:
            assert self.piece is not None
            self._script_set("DO_GRIP", 0)
            self.piece.location = "pallet_slot"
            self.pallet[self.piece.shape] += 1
            self.motion.enqueue(np.radians(cfg.home))

        self._log("info", f"phase {old.value}->{phase.value} "
                  f"phase={phase.value} cycle={self.cycle_count}")

    def tick(self, dt: float = DEFAULT_TICK_S):
        """Advance the simulation by dt seconds."""
        self.sim_time_ms += dt * 1000.0
        self.tick_count += 1
        cfg = self.config

        self.motion.tick(dt)

        if not self.running:
            return

        self._phase_elapsed += dt
        if self.phase == Phase.SPAWN and self._phase_elapsed >= cfg.spawn_s:
            self._transition(Phase.RECOGNIZE)
        elif self.phase == Phase.RECOGNIZE and self._phase_elapsed >= cfg.recognize_s:
            self._transition(Phase.CONVEY)
        elif self.phase == Phase.CONVEY:
            # the belt only advances while its drive output is on; a manual
            # override of DO_CONVEYOR halts the piece
            if self.io["DO_CONVEYOR"].value == 1:
                self._convey_progress += dt
            if self._convey_progress >= cfg.convey_s:
                self._transition(Phase.AT_B)
        elif self.phase == Phase.AT_B and self._phase_elapsed >= cfg.at_b_s:
            self._transition(Phase.PICK)
        elif self.phase == Phase.PICK and self.motion.settled:
            self._transition(Phase.PLACE)
        elif self.phase == Phase.PLACE and self.motion.settled:
            self._transition(Phase.RETURN)
        elif self.phase == Phase.RETURN and self.motion.settled:
            self.cycle_count += 1
            self._transition(Phase.SPAWN)

    # -- published sample -------------------------------------------------------

    def joints_deg(self) -> tuple[float, ...]:
        return tuple(float(v) for v in np.degrees(self.motion.current_q))

    def tcp_pose(self) -> kin.Pose:
        return kin.forward_kinematics(self.dh, self.motion.current_q)

    # -- invariants (used by the model-checking tests) ----------------------------

    def check_invariants(self):
        """Raise AssertionError if any workcell invariant is violated.
        Manually overridden signals are exempt until the next transition.
        """
        assert not (self.running and self.phase == Phase.IDLE), \
            "running implies phase != IDLE"

        shape_dos = [n for n in SHAPE_DO.values()
                     if n not in self._overrides and self.io[n].value == 1]
        assert len(shape_dos) <= 1, f"shape DOs not mutually exclusive: {shape_dos}"
        if shape_dos and self.piece is not None:
            assert shape_dos[0] == SHAPE_DO[self.piece.shape], \
                f"{shape_dos[0]} does not match piece shape {self.piece.shape}"

        at_b = self.piece is not None and self.piece.location == "B"
        assert (self.io["DI_IR"].value == 1) == at_b, \
            f"DI_IR={self.io['DI_IR'].value} but piece at B={at_b}"

        if "DO_CONVEYOR" not in self._overrides and self.running:
            assert (self.io["DO_CONVEYOR"].value == 1) == (self.phase == Phase.CONVEY), \
                f"DO_CONVEYOR={self.io['DO_CONVEYOR'].value} in phase {self.phase}"

        assert self.dh.within_limits(self.motion.current_q, tol=1e-9), \
            "joints outside limits"
