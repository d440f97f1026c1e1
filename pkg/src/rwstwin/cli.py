"""Command-line entry point: run the emulator, the twin, the proxy, the IK
solver, and the refresh benchmark without any UI.

Flags take operator units: degrees and millimetres.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import kinematics as kin
from .bench import run_refresh_bench
from .config import AppConfig, load_config
from .emulator import Emulator, EmulatorConfig
from .gateway import (CommandRejected, ControllerUnavailable, GatewayBusy,
                      GatewayError, JogCommand, LinearCommand, MotionGateway,
                      SolverService, StaleState)
from .proxy import ProxyServer
from .twin import TwinClient

log = logging.getLogger(__name__)

ENV_CONTROLLER_URL = "TWIN_CONTROLLER_URL"


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated values")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{what}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwstwin",
                                description="6-DOF robot workcell digital twin")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    # emulator
    emu = sub.add_parser("emulator", help="controller emulator")
    emu_sub = emu.add_subparsers(dest="action", required=True)
    serve = emu_sub.add_parser("serve", help="start the emulator")
    serve.add_argument("--port", type=int, default=8880)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--config", default=None)
    serve.add_argument("--camera-delay-ms", type=float, default=0.0)
    serve.add_argument("--seed", type=int, default=0,
                       help="selects the first workpiece shape (seed %% 3)")
    serve.add_argument("--autostart", action="store_true",
                       help="start the stacking program immediately")

    # twin
    twin = sub.add_parser("twin", help="twin client operations")
    twin.add_argument("--controller-url",
                      default=os.environ.get(ENV_CONTROLLER_URL))
    twin.add_argument("--config", default=None)
    twin.add_argument("--json", action="store_true")
    twin_sub = twin.add_subparsers(dest="action", required=True)
    run = twin_sub.add_parser("run", help="poll and report until stopped")
    run.add_argument("--duration", type=float, default=0.0,
                     help="seconds; 0 runs until interrupted")
    jog = twin_sub.add_parser("jog", help="joint motion")
    group = jog.add_mutually_exclusive_group(required=True)
    group.add_argument("--relative", type=lambda s: _floats(s, 6, "--relative"))
    group.add_argument("--absolute", type=lambda s: _floats(s, 6, "--absolute"))
    linear = twin_sub.add_parser("linear", help="Cartesian linear move via IK")
    linear.add_argument("--delta", required=True,
                        type=lambda s: _floats(s, 3, "--delta"),
                        help="dx,dy,dz in mm")
    pointer = twin_sub.add_parser("pointer", help="RAPID pointer operation")
    pointer.add_argument("op", choices=["reset", "start", "stop"])
    do = twin_sub.add_parser("do", help="set a digital output")
    do.add_argument("--name", required=True)
    do.add_argument("--value", type=int, choices=[0, 1], required=True)
    record = twin_sub.add_parser("record", help="record a TCP trajectory")
    record.add_argument("--duration", type=float, default=10.0)
    record.add_argument("--out", required=True, help="CSV output path")
    metrics = twin_sub.add_parser("metrics", help="sample refresh telemetry")
    metrics.add_argument("--duration", type=float, default=3.0)

    # ik
    ik = sub.add_parser("ik", help="inverse kinematics")
    ik_sub = ik.add_subparsers(dest="action", required=True)
    solve = ik_sub.add_parser("solve", help="solve one IK problem")
    solve.add_argument("--target", required=True,
                       type=lambda s: _floats(s, 7, "--target"),
                       help="x,y,z,qw,qx,qy,qz (mm / unit quaternion)")
    solve.add_argument("--seed", required=True,
                       type=lambda s: _floats(s, 6, "--seed"),
                       help="seed joints in degrees")
    solve.add_argument("--config", default=None)
    solve.add_argument("--json", action="store_true")
    serve_ik = ik_sub.add_parser("serve", help="run the solver socket service")
    serve_ik.add_argument("--host", default="127.0.0.1")
    serve_ik.add_argument("--port", type=int, default=8777)
    serve_ik.add_argument("--config", default=None)

    # proxy
    proxy = sub.add_parser("proxy", help="browser proxy gateway")
    proxy_sub = proxy.add_subparsers(dest="action", required=True)
    pserve = proxy_sub.add_parser("serve")
    pserve.add_argument("--controller-url",
                        default=os.environ.get(ENV_CONTROLLER_URL))
    pserve.add_argument("--port", type=int, default=8780)
    pserve.add_argument("--host", default="127.0.0.1")
    pserve.add_argument("--static-dir", default=None)
    pserve.add_argument("--cadence-ms", type=float, default=50.0)
    pserve.add_argument("--config", default=None)

    # bench
    bench = sub.add_parser("bench", help="benchmarks")
    bench_sub = bench.add_subparsers(dest="action", required=True)
    refresh = bench_sub.add_parser("refresh", help="loopback refresh benchmark")
    refresh.add_argument("--duration", type=float, default=60.0)
    refresh.add_argument("--controller-url", default=None)
    refresh.add_argument("--camera-delay-ms", type=float, default=0.0)
    refresh.add_argument("--run-cycle", action="store_true")
    refresh.add_argument("--json", action="store_true")

    return p


def _require_controller(args) -> str:
    if not args.controller_url:
        print(f"error: --controller-url or ${ENV_CONTROLLER_URL} required",
              file=sys.stderr)
        sys.exit(2)
    return args.controller_url


def _app_config(path) -> AppConfig:
    return load_config(path)


def _wait_ticket(ticket, out_json: bool) -> int:
    ticket.wait()
    if out_json:
        print(json.dumps({"ticket": ticket.ticket_id, "status": ticket.status,
                          "reason": ticket.reason,
                          "target_deg": list(ticket.target_deg)}))
    else:
        print(f"ticket {ticket.ticket_id}: {ticket.status}"
              + (f" ({ticket.reason})" if ticket.reason else ""))
    return 0 if ticket.status == "done" else 1


def cmd_emulator_serve(args) -> int:
    cfg = _app_config(args.config)
    emu_cfg = EmulatorConfig(port=args.port, host=args.host,
                             camera_delay_ms=args.camera_delay_ms,
                             credentials=cfg.credentials,
                             workcell=cfg.workcell, dh=cfg.dh)
    emu = Emulator(emu_cfg)
    emu.sim._shape_index = args.seed % 3
    emu.start()
    if args.autostart:
        emu.execution_action("start")
    print(f"emulator listening on {emu.url}")
    last_seq = 0
    try:
        while True:
            time.sleep(0.2)
            msg = emu.spylog(last_seq)
            for e in msg.events:
                print(f"[{e.level}] {e.text}")
            last_seq = msg.next_since
    except KeyboardInterrupt:
        pass
    finally:
        emu.stop()
    return 0


def _with_twin(args, fn) -> int:
    url = _require_controller(args)
    cfg = _app_config(getattr(args, "config", None))
    twin = TwinClient(url, creds=cfg.credentials, dh=cfg.dh).start()
    try:
        deadline = time.time() + 3.0
        while twin.state.snapshot().joints_rad is None:
            if time.time() > deadline:
                print("error: controller unreachable or not serving joints",
                      file=sys.stderr)
                return 1
            time.sleep(0.02)
        return fn(twin, cfg)
    finally:
        twin.stop()


def cmd_twin(args) -> int:
    def jog(twin, cfg):
        gw = MotionGateway(twin, dh=cfg.dh, creds=cfg.credentials)
        if args.relative is not None:
            cmd = JogCommand(joints_deg=args.relative, mode="relative")
        else:
            cmd = JogCommand(joints_deg=args.absolute, mode="absolute")
        return _wait_ticket(gw.jog(cmd), args.json)

    def linear(twin, cfg):
        gw = MotionGateway(twin, dh=cfg.dh, creds=cfg.credentials)
        return _wait_ticket(gw.linear_move(LinearCommand(delta_mm=args.delta)),
                            args.json)

    def pointer(twin, cfg):
        gw = MotionGateway(twin, dh=cfg.dh, creds=cfg.credentials)
        gw.pointer_op(args.op)
        print(json.dumps({"ok": True}) if args.json else f"pointer {args.op}: ok")
        return 0

    def do(twin, cfg):
        gw = MotionGateway(twin, dh=cfg.dh, creds=cfg.credentials)
        gw.set_do(args.name, args.value)
        print(json.dumps({"ok": True}) if args.json
              else f"{args.name}={args.value}: ok")
        return 0

    def record(twin, cfg):
        rec = twin.start_recording()
        time.sleep(args.duration)
        twin.stop_recording()
        rec.export_csv(args.out)
        n = len(rec.rows)
        print(json.dumps({"rows": n, "out": args.out}) if args.json
              else f"recorded {n} samples to {args.out}")
        return 0

    def metrics(twin, cfg):
        time.sleep(args.duration)
        stats = twin.refresh_stats(include_warmup=False)
        if args.json:
            print(json.dumps({
                name: [{"period_ms": w.period_ms, "window_count": w.window_count,
                        "max_period_ms": w.max_period_ms, "warmup": w.warmup}
                       for w in ws]
                for name, ws in stats.items()}))
        else:
            for name, ws in sorted(stats.items()):
                if ws:
                    mean = sum(w.period_ms for w in ws) / len(ws)
                    print(f"{name}: mean {mean:.2f} ms over {len(ws)} windows")
                else:
                    print(f"{name}: no closed windows yet")
        return 0

    def run(twin, cfg):
        start = time.time()
        try:
            while args.duration <= 0 or time.time() - start < args.duration:
                time.sleep(1.0)
                snap = twin.state.snapshot()
                stats = twin.refresh_stats(include_warmup=True)
                parts = [f"conn={snap.connection}", f"phase={snap.phase or '-'}"]
                for name, ws in sorted(stats.items()):
                    if ws:
                        parts.append(f"{name}={ws[-1].period_ms:.1f}ms")
                print(" ".join(parts))
        except KeyboardInterrupt:
            pass
        return 0

    handlers = {"jog": jog, "linear": linear, "pointer": pointer, "do": do,
                "record": record, "metrics": metrics, "run": run}
    return _with_twin(args, handlers[args.action])


def cmd_ik(args) -> int:
    cfg = _app_config(args.config)
    if args.action == "serve":
        svc = SolverService(host=args.host, port=args.port, dh=cfg.dh).start()
        print(f"solver service on {svc.host}:{svc.port}")
        try:
            while True:
                time.sleep(1)
        except KeyboardInterrupt:
            svc.stop()
        return 0

    x, y, z, qw, qx, qy, qz = args.target
    s = cfg.solver
    problem = kin.IkProblem(
        target=kin.Pose(position=np.array([x, y, z]),
                        orientation=np.array([qw, qx, qy, qz])),
        seed=np.radians(args.seed),
        weights_task=np.diag(s.weights_task_diag),
        damping_bias=s.damping_bias, learning_rate=s.learning_rate,
        tol_pos=s.tol_pos_mm, tol_orient=s.tol_orient_rad,
        max_iters=s.max_iters)
    result = kin.solve_ik(cfg.dh, problem)
    out = {"solution_deg": [float(v) for v in np.degrees(result.solution)],
           "converged": result.converged, "iterations": result.iterations,
           "pos_err_mm": result.pos_err, "orient_err_rad": result.orient_err}
    if args.json:
        print(json.dumps(out))
    else:
        sol = ", ".join(f"{v:.4f}" for v in out["solution_deg"])
        print(f"converged={result.converged} iterations={result.iterations}")
        print(f"solution (deg): {sol}")
        print(f"pos_err={result.pos_err:.6f} mm orient_err={result.orient_err:.8f} rad")
    return 0 if result.converged else 1


def cmd_proxy_serve(args) -> int:
    url = _require_controller(args)
    cfg = _app_config(args.config)
    twin = TwinClient(url, creds=cfg.credentials, dh=cfg.dh).start()
    gw = MotionGateway(twin, dh=cfg.dh, creds=cfg.credentials)
    proxy = ProxyServer(twin, gw, host=args.host, port=args.port,
                        static_dir=args.static_dir,
                        stream_cadence_s=args.cadence_ms / 1000.0).start()
    print(f"proxy listening on {proxy.url}")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        pass
    finally:
        proxy.stop()
        twin.stop()
    return 0


def cmd_bench_refresh(args) -> int:
    result = run_refresh_bench(controller_url=args.controller_url,
                               duration_s=args.duration,
                               camera_delay_ms=args.camera_delay_ms,
                               run_cycle=args.run_cycle or
                               args.camera_delay_ms > 0)
    if args.json:
        print(json.dumps({
            name: {"mean_period_ms": result.mean_period_ms(name),
                   "max_period_ms": result.max_period_ms(name),
                   "windows": len(ws)}
            for name, ws in result.windows.items()}))
    else:
        print(result.table())
    ok = all(ws for ws in result.windows.values())
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        if args.command == "emulator":
            return cmd_emulator_serve(args)
        if args.command == "twin":
            return cmd_twin(args)
        if args.command == "ik":
            return cmd_ik(args)
        if args.command == "proxy":
            return cmd_proxy_serve(args)
        if args.command == "bench":
            return cmd_bench_refresh(args)
        return 2
    except (CommandRejected, StaleState) as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return 1
    except GatewayBusy as exc:
        print(f"busy: {exc}", file=sys.stderr)
        return 1
    except (ControllerUnavailable, GatewayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
