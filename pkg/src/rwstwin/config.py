"""YAML configuration for the emulator, solver, and wire credentials.
Every section is optional; omitted values fall back to the IRB120 defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import yaml

from . import kinematics as kin
from .wire import DigestCredentials
from .workcell import WorkcellConfig


@dataclass
class SolverDefaults:
    damping_bias: float = 1e-3
    learning_rate: float = 1.0
    tol_pos_mm: float = 0.01
    tol_orient_rad: float = 1e-3
    max_iters: int = 200
    weights_task_diag: tuple = (1.0, 1.0, 1.0, 100.0, 100.0, 100.0)


@dataclass
class AppConfig:
    dh: kin.DhTable
    workcell: WorkcellConfig
    credentials: DigestCredentials
    solver: SolverDefaults


def _dh_from_dict(d: dict) -> kin.DhTable:
    rows = tuple(
        (math.radians(r.get("theta_offset_deg", 0.0)), float(r["d_mm"]),
         float(r["a_mm"]), math.radians(r["alpha_deg"]))
        for r in d["rows"])
    limits = tuple((math.radians(lo), math.radians(hi))
                   for lo, hi in d["joint_limits_deg"])
    speeds = tuple(math.radians(s) for s in d["joint_speed_limits_deg_s"])
    return kin.DhTable(rows=rows, joint_limits=limits, joint_speed_limits=speeds)


def load_config(path: str | None = None) -> AppConfig:
    raw: dict = {}
    if path is not None:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}

    dh = _dh_from_dict(raw["dh_table"]) if "dh_table" in raw else kin.irb120_table()

    wc_raw = raw.get("workcell", {})
    workcell = WorkcellConfig(
        spawn_s=wc_raw.get("spawn_s", 0.5),
        recognize_s=wc_raw.get("recognize_s", 1.5),
        convey_s=wc_raw.get("convey_s", 2.0),
        at_b_s=wc_raw.get("at_b_s", 0.2),
        pick_waypoints=tuple(tuple(w) for w in wc_raw["pick_waypoints_deg"])
        if "pick_waypoints_deg" in wc_raw else WorkcellConfig.pick_waypoints,
        place_waypoints=tuple(tuple(w) for w in wc_raw["place_waypoints_deg"])
        if "place_waypoints_deg" in wc_raw else WorkcellConfig.place_waypoints,
        home=tuple(wc_raw.get("home_deg", WorkcellConfig.home)),
    )

    cred_raw = raw.get("credentials", {})
    credentials = DigestCredentials(
        username=cred_raw.get("username", DigestCredentials.username),
        password=cred_raw.get("password", DigestCredentials.password),
        realm=cred_raw.get("realm", DigestCredentials.realm),
        nonce_lifetime_s=cred_raw.get("nonce_lifetime_s",
                                      DigestCredentials.nonce_lifetime_s),
    )

    s_raw = raw.get("solver", {})
    solver = SolverDefaults(
        damping_bias=s_raw.get("damping_bias", SolverDefaults.damping_bias),
        learning_rate=s_raw.get("learning_rate", SolverDefaults.learning_rate),
        tol_pos_mm=s_raw.get("tol_pos_mm", SolverDefaults.tol_pos_mm),
        tol_orient_rad=s_raw.get("tol_orient_rad", SolverDefaults.tol_orient_rad),
        max_iters=s_raw.get("max_iters", SolverDefaults.max_iters),
        weights_task_diag=tuple(s_raw.get("weights_task_diag",
                                          SolverDefaults.weights_task_diag)),
    )
    return AppConfig(dh=dh, workcell=workcell, credentials=credentials,
                     solver=solver)
