import json
import threading

import pytest
import requests

from rwstwin.gateway import MotionGateway
from rwstwin.proxy import ProxyServer

from conftest import wait_for


@pytest.fixture
def proxy(twin):
    server = ProxyServer(twin, MotionGateway(twin), port=0,
                         stream_cadence_s=0.02).start()
    wait_for(lambda: twin.state.snapshot().io is not None,
             message="twin io never arrived")
    yield server
    server.stop()


def read_sse_events(url, count, timeout=10.0):
    """Collect the first `count` 'state' events from an SSE stream."""
    events = []
    with requests.get(url, stream=True, timeout=timeout) as resp:
        assert resp.status_code == 200
        assert resp.headers["Content-Type"].startswith("text/event-stream")
        current_event = None
        for line in resp.iter_lines():
            line = line.decode()
            if line.startswith("event: "):
                current_event = line[len("event: "):]
            elif line.startswith("data: ") and current_event == "state":
                events.append(json.loads(line[len("data: "):]))
                if len(events) >= count:
                    return events
    return events


class TestState:
    def test_state_has_all_sections(self, proxy):
        view = requests.get(proxy.url + "/api/state").json()
        assert view["connection"] == "up"
        assert len(view["joints"]["deg"]) == 6
        assert len(view["tcp"]["pos"]) == 3 and len(view["tcp"]["quat"]) == 4
        assert {s["name"] for s in view["io"]["signals"]} >= {"DO_3", "DI_IR"}
        assert "spylog" in view and "metrics" in view

    def test_state_503_when_twin_down(self, twin):
        from rwstwin.twin import TwinClient
        dead = TwinClient("http://127.0.0.1:1")  # nothing listens on port 1
        proxy = ProxyServer(dead, MotionGateway(dead), port=0).start()
        try:
            resp = requests.get(proxy.url + "/api/state")
            assert resp.status_code == 503
        finally:
            proxy.stop()

    def test_metrics_endpoint(self, proxy):
        wait_for(lambda: any(requests.get(proxy.url + "/api/metrics")
                             .json().values()), timeout=10.0,
                 message="no telemetry windows")
        metrics = requests.get(proxy.url + "/api/metrics").json()
        assert set(metrics) == {"joints", "tcp", "io"}
        window = next(w for ws in metrics.values() for w in ws)
        assert window["period_ms"] * window["window_count"] == pytest.approx(1000)

    def test_camera_relay(self, proxy):
        resp = requests.get(proxy.url + "/api/camera.jpg")
        assert resp.status_code == 200
        assert resp.content[:2] == b"\xff\xd8"

    def test_unknown_path_404(self, proxy):
        assert requests.get(proxy.url + "/api/nope").status_code == 404

    def test_cors_preflight(self, proxy):
        resp = requests.options(proxy.url + "/api/command")
        assert resp.status_code == 204
        assert resp.headers["Access-Control-Allow-Origin"] == "*"


class TestStream:
    def test_sse_delivers_fresh_snapshots(self, proxy):
        events = read_sse_events(proxy.url + "/api/stream", 3)
        assert len(events) == 3
        assert all(len(e["joints"]["deg"]) == 6 for e in events)

    def test_two_concurrent_clients(self, proxy):
        results = {}

        def client(key):
            results[key] = read_sse_events(proxy.url + "/api/stream", 2)

        threads = [threading.Thread(target=client, args=(k,)) for k in "ab"]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=15)
        assert len(results) == 2
        assert all(len(v) == 2 for v in results.values())

    def test_stream_reflects_motion(self, proxy):
        requests.post(proxy.url + "/api/command",
                      json={"kind": "jog",
                            "joints_deg": [20, 0, 0, 0, 0, 0]})
        wait_for(lambda: abs(requests.get(proxy.url + "/api/state").json()
                             ["joints"]["deg"][0] - 20) < 0.1,
                 timeout=10.0, message="jog never visible via proxy")


class TestCommands:
    def post(self, proxy, body):
        return requests.post(proxy.url + "/api/command", json=body)

    def test_jog_returns_ticket_that_completes(self, proxy):
        resp = self.post(proxy, {"kind": "jog",
                                 "joints_deg": [5, 0, 0, 0, 0, 0]})
        assert resp.status_code == 202
        ticket = resp.json()["ticket"]
        wait_for(lambda: requests.get(
            proxy.url + f"/api/ticket/{ticket}").json()["status"] == "done",
            timeout=10.0, message="ticket never done")

    def test_linear_command(self, proxy):
        resp = self.post(proxy, {"kind": "linear", "delta_mm": [50, 0, 0]})
        assert resp.status_code == 202

    def test_pointer_and_do_commands(self, proxy, emulator):
        assert self.post(proxy, {"kind": "do", "name": "DO_6",
                                 "value": 1}).status_code == 202
        assert emulator.sim.io["DO_6"].value == 1
        resp = self.post(proxy, {"kind": "pointer", "action": "start"})
        assert resp.status_code == 202
        assert emulator.sim.running
        ticket = resp.json()["ticket"]
        status = requests.get(proxy.url + f"/api/ticket/{ticket}").json()
        assert status["status"] == "done"
        self.post(proxy, {"kind": "pointer", "action": "stop"})

    def test_bad_commands_400(self, proxy):
        for body in ({"kind": "jog", "joints_deg": [1, 2]},
                     {"kind": "linear", "delta_mm": "x"},
                     {"kind": "pointer", "action": "warp"},
                     {"kind": "do", "name": "DO_6", "value": 7},
                     {"kind": "teleport"},
                     []):
            assert self.post(proxy, body).status_code == 400
        raw = requests.post(proxy.url + "/api/command", data=b"not json")
        assert raw.status_code == 400

    def test_jog_limit_rejection_400(self, proxy):
        resp = self.post(proxy, {"kind": "jog",
                                 "joints_deg": [200, 0, 0, 0, 0, 0]})
        assert resp.status_code == 400

    def test_busy_maps_to_409(self, proxy, emulator):
        emulator.execution_action("start")
        try:
            resp = self.post(proxy, {"kind": "jog",
                                     "joints_deg": [5, 0, 0, 0, 0, 0]})
            assert resp.status_code == 409
        finally:
            emulator.execution_action("stop")

    def test_unknown_ticket_404(self, proxy):
        assert requests.get(proxy.url + "/api/ticket/zzz").status_code == 404


class TestStatic:
    def test_placeholder_page_without_bundle(self, proxy):
        resp = requests.get(proxy.url + "/")
        assert resp.status_code == 200 and b"html" in resp.content

    def test_serves_bundle_and_blocks_traversal(self, twin, tmp_path):
        (tmp_path / "index.html").write_text("<html>console</html>")
        (tmp_path / "app.js").write_text("export {};")
        server = ProxyServer(twin, MotionGateway(twin), port=0,
                             static_dir=str(tmp_path)).start()
        try:
            assert b"console" in requests.get(server.url + "/").content
            js = requests.get(server.url + "/app.js")
            assert js.headers["Content-Type"].startswith("text/javascript") \
                or js.headers["Content-Type"].startswith("application/javascript")
            evil = requests.get(server.url + "/../../etc/passwd")
            assert evil.status_code == 404
        finally:
            server.stop()
