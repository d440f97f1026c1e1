import json
import math

import numpy as np
import pytest

from rwstwin import kinematics as kin
from rwstwin.cli import build_parser, main

HOME_TARGET = "374,0,630,0.7071067811865476,0,0.7071067811865476,0"
SEED = "0,0,0,0,0,0"


class TestParser:
    def test_usage_error_exits_2(self, capsys):
        with pytest.raises(SystemExit) as ei:
            build_parser().parse_args([])
        assert ei.value.code == 2

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as ei:
            build_parser().parse_args(["teleport"])
        assert ei.value.code == 2

    def test_bad_target_arity_exits_2(self):
        with pytest.raises(SystemExit) as ei:
            build_parser().parse_args(["ik", "solve", "--target", "1,2,3",
                                       "--seed", SEED])
        assert ei.value.code == 2

    def test_jog_requires_exactly_one_mode(self):
        with pytest.raises(SystemExit) as ei:
            build_parser().parse_args(["twin", "jog"])
        assert ei.value.code == 2
        with pytest.raises(SystemExit) as ei:
            build_parser().parse_args(["twin", "jog", "--relative", SEED,
                                       "--absolute", SEED])
        assert ei.value.code == 2


class TestIkSolve:
    def test_home_target_converges_exit_0(self, capsys):
        rc = main(["ik", "solve", "--target", HOME_TARGET, "--seed", SEED,
                   "--json"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["converged"] and out["pos_err_mm"] <= 0.01

    def test_reachable_offset_target(self, capsys):
        target = "474,0,630,0.7071067811865476,0,0.7071067811865476,0"
        rc = main(["ik", "solve", "--target", target, "--seed", SEED,
                   "--json"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        pose = kin.forward_kinematics(kin.irb120_table(),
                                      np.radians(out["solution_deg"]))
        np.testing.assert_allclose(pose.position, (474, 0, 630), atol=0.01)

    def test_unreachable_target_exit_1(self, capsys):
        target = "2000,0,630,0.7071067811865476,0,0.7071067811865476,0"
        rc = main(["ik", "solve", "--target", target, "--seed", SEED])
        assert rc == 1

    def test_human_readable_output(self, capsys):
        rc = main(["ik", "solve", "--target", HOME_TARGET, "--seed", SEED])
        assert rc == 0
        out = capsys.readouterr().out
        assert "converged=True" in out and "solution (deg)" in out


class TestTwinCommands:
    def test_missing_controller_url_exits_2(self, capsys, monkeypatch):
        monkeypatch.delenv("TWIN_CONTROLLER_URL", raising=False)
        with pytest.raises(SystemExit) as ei:
            main(["twin", "pointer", "start"])
        assert ei.value.code == 2

    def test_unreachable_controller_exit_1(self, capsys):
        rc = main(["twin", "--controller-url", "http://127.0.0.1:1",
                   "pointer", "start"])
        assert rc == 1

    def test_jog_via_cli(self, emulator, capsys):
        rc = main(["twin", "--controller-url", emulator.url, "--json",
                   "jog", "--absolute", "8,0,0,0,0,0"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["status"] == "done"
        assert abs(emulator.sim.joints_deg()[0] - 8) < 0.1

    def test_linear_via_cli(self, emulator, capsys):
        rc = main(["twin", "--controller-url", emulator.url, "--json",
                   "linear", "--delta", "50,0,0"])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["status"] == "done"

    def test_rejected_jog_exit_1(self, emulator, capsys):
        rc = main(["twin", "--controller-url", emulator.url,
                   "jog", "--absolute", "200,0,0,0,0,0"])
        assert rc == 1
        assert "rejected" in capsys.readouterr().err

    def test_pointer_and_do_via_cli(self, emulator, capsys):
        assert main(["twin", "--controller-url", emulator.url,
                     "pointer", "start"]) == 0
        assert emulator.sim.running
        assert main(["twin", "--controller-url", emulator.url,
                     "do", "--name", "DO_6", "--value", "1"]) == 0
        assert emulator.sim.io["DO_6"].value == 1
        assert main(["twin", "--controller-url", emulator.url,
                     "pointer", "stop"]) == 0

    def test_record_writes_csv(self, emulator, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        rc = main(["twin", "--controller-url", emulator.url, "--json",
                   "record", "--duration", "0.5", "--out", str(out)])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["rows"] > 0
        assert out.read_text().splitlines()[0].startswith("t_ms,j1")

    def test_metrics_report(self, emulator, capsys):
        rc = main(["twin", "--controller-url", emulator.url, "--json",
                   "metrics", "--duration", "2.5"])
        assert rc == 0
        stats = json.loads(capsys.readouterr().out)
        assert set(stats) == {"joints", "tcp", "io"}


class TestBench:
    def test_refresh_smoke(self, capsys):
        rc = main(["bench", "refresh", "--duration", "3", "--json"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        for name in ("joints", "tcp", "io"):
            assert math.isfinite(out[name]["mean_period_ms"])
            assert out[name]["windows"] >= 1
