import json
import math
import random
import socket

import numpy as np
import pytest

from rwstwin import kinematics as kin
from rwstwin.gateway import (CommandRejected, GatewayBusy, JogCommand,
                             LinearCommand, MotionGateway, SolverService,
                             StaleState, solve_over_socket, solve_request)



@pytest.fixture
def gateway(twin):
    return MotionGateway(twin)


HOME_TCP = np.array([374.0, 0.0, 630.0])
HOME_QUAT = (math.sqrt(0.5), 0.0, math.sqrt(0.5), 0.0)


class TestCommandValidation:
    def test_jog_needs_six_values(self):
        with pytest.raises(CommandRejected):
            JogCommand(joints_deg=(1, 2, 3))

    def test_jog_rejects_nan(self):
        with pytest.raises(CommandRejected):
            JogCommand(joints_deg=(float("nan"), 0, 0, 0, 0, 0))

    def test_jog_rejects_unknown_mode(self):
        with pytest.raises(CommandRejected):
            JogCommand(joints_deg=(0,) * 6, mode="sideways")

    def test_linear_step_limit(self):
        with pytest.raises(CommandRejected):
            LinearCommand(delta_mm=(400, 0, 0))
        LinearCommand(delta_mm=(100, 0, 0))  # within the limit


class TestJog:
    def test_absolute_jog_settles(self, gateway):
        ticket = gateway.jog(JogCommand(joints_deg=(10, 5, -5, 0, 10, 0)))
        assert ticket.wait(timeout=10)
        assert ticket.status == "done"
        snap = gateway.twin.state.snapshot()
        np.testing.assert_allclose(np.degrees(snap.joints_rad),
                                   (10, 5, -5, 0, 10, 0), atol=0.1)

    def test_relative_jog(self, gateway):
        gateway.jog(JogCommand(joints_deg=(10, 0, 0, 0, 0, 0))).wait(10)
        ticket = gateway.jog(JogCommand(joints_deg=(5, 0, 0, 0, 0, 0),
                                        mode="relative"))
        assert ticket.wait(timeout=10) and ticket.status == "done"
        snap = gateway.twin.state.snapshot()
        assert abs(np.degrees(snap.joints_rad)[0] - 15) < 0.1

    def test_out_of_limit_jog_rejected_before_send(self, gateway, emulator):
        before = emulator.sim.joints_deg()
        with pytest.raises(CommandRejected):
            gateway.jog(JogCommand(joints_deg=(0, 0, 80, 0, 0, 0)))
        assert emulator.sim.joints_deg() == before
        assert emulator.sim.motion.settled

    def test_second_jog_while_pending_is_busy(self, gateway):
        first = gateway.jog(JogCommand(joints_deg=(60, 0, 0, 0, 0, 0)))
        with pytest.raises(GatewayBusy):
            gateway.jog(JogCommand(joints_deg=(0, 0, 0, 0, 0, 0)))
        assert first.wait(timeout=10)

    def test_jog_refused_while_cycle_runs(self, gateway, emulator):
        emulator.execution_action("start")
        with pytest.raises(GatewayBusy):
            gateway.jog(JogCommand(joints_deg=(10, 0, 0, 0, 0, 0)))
        emulator.execution_action("stop")

    def test_random_jog_fuzz_never_moves_outside_limits(self, gateway,
                                                        emulator):
        rng = random.Random(99)
        limits = gateway.dh.joint_limits
        for _ in range(30):
            target = [rng.uniform(math.degrees(lo) - 40,
                                  math.degrees(hi) + 40)
                      for lo, hi in limits]
            try:
                gateway.jog(JogCommand(joints_deg=tuple(target))).wait(10)
            except (CommandRejected, GatewayBusy):
                pass
            assert gateway.dh.within_limits(
                np.radians(emulator.sim.joints_deg()), tol=1e-9)


class TestLinearMove:
    def test_plus_x_reaches_target(self, gateway):
        ticket = gateway.linear_move(LinearCommand(delta_mm=(100, 0, 0)))
        assert ticket.ik_result is not None and ticket.ik_result.converged
        assert ticket.wait(timeout=10) and ticket.status == "done"
        snap = gateway.twin.state.snapshot()
        pose = kin.forward_kinematics(gateway.dh, snap.joints_rad)
        np.testing.assert_allclose(pose.position, HOME_TCP + (100, 0, 0),
                                   atol=0.5)

    def test_orientation_is_kept(self, gateway):
        before = gateway.twin.state.snapshot().tcp.orientation
        ticket = gateway.linear_move(LinearCommand(delta_mm=(0, 50, 0)))
        assert ticket.wait(timeout=10) and ticket.status == "done"
        after = gateway.twin.state.snapshot().tcp.orientation
        dot = abs(float(np.dot(before, after)))
        assert math.degrees(2 * math.acos(min(dot, 1.0))) < 0.5

    def test_unreachable_delta_rejected(self, gateway):
        with pytest.raises(CommandRejected):
            gateway.linear_move(LinearCommand(delta_mm=(290, 0, 0)))

    def test_stale_twin_rejected(self, emulator):
        from rwstwin.twin import TwinClient
        twin = TwinClient(emulator.url)  # never started: no samples
        gw = MotionGateway(twin)
        with pytest.raises(StaleState):
            gw.linear_move(LinearCommand(delta_mm=(10, 0, 0)))


class TestSolver:
    def request(self):
        return {"target": {"pos": [474.0, 0.0, 630.0],
                           "quat": list(HOME_QUAT)},
                "seed": [0, 0, 0, 0, 0, 0]}

    def test_in_process_solution(self):
        dh = kin.irb120_table()
        reply = solve_request(dh, self.request())
        assert reply["converged"]
        pose = kin.forward_kinematics(dh, np.radians(reply["solution"]))
        np.testing.assert_allclose(pose.position, (474, 0, 630), atol=0.01)

    def test_socket_reply_is_bit_identical_to_in_process(self):
        dh = kin.irb120_table()
        service = SolverService(dh=dh).start()
        try:
            local = solve_request(dh, self.request())
            remote = solve_over_socket(service.host, service.port,
                                       self.request())
            assert json.loads(json.dumps(local)) == remote
            assert local["solution"] == remote["solution"]  # exact floats
        finally:
            service.stop()

    def test_malformed_json_reports_parse_position(self):
        service = SolverService().start()
        try:
            with socket.create_connection((service.host, service.port)) as s:
                s.sendall(b'{"target": nope}\n')
                reply = json.loads(s.makefile().readline())
            assert "error" in reply and isinstance(reply["parse_position"], int)
        finally:
            service.stop()

    def test_missing_fields_rejected(self):
        service = SolverService().start()
        try:
            reply = solve_over_socket(service.host, service.port,
                                      {"target": {"pos": [1, 2, 3]}})
            assert "error" in reply
            reply = solve_over_socket(service.host, service.port,
                                      {"target": {"pos": [474, 0, 630],
                                                  "quat": list(HOME_QUAT)},
                                       "seed": [1, 2]})
            assert "error" in reply
        finally:
            service.stop()

    def test_multiple_requests_per_connection(self):
        service = SolverService().start()
        try:
            with socket.create_connection((service.host, service.port)) as s:
                f = s.makefile("rwb")
                for _ in range(3):
                    f.write(json.dumps(self.request()).encode() + b"\n")
                    f.flush()
                    assert json.loads(f.readline())["converged"]
        finally:
            service.stop()


class TestDoAndPointer:
    def test_set_do_roundtrip(self, gateway, emulator):
        gateway.set_do("DO_6", 1)
        assert emulator.sim.io["DO_6"].value == 1

    def test_set_do_unknown_rejected(self, gateway):
        with pytest.raises(CommandRejected):
            gateway.set_do("DO_99", 1)

    def test_pointer_cycle(self, gateway, emulator):
        gateway.pointer_op("start")
        assert emulator.sim.running
        with pytest.raises(GatewayBusy):
            gateway.pointer_op("start")
        gateway.pointer_op("stop")
        gateway.pointer_op("reset")
        assert emulator.sim.pointer_at_main and not emulator.sim.running

    def test_unknown_pointer_action(self, gateway):
        with pytest.raises(CommandRejected):
            gateway.pointer_op("launch")
