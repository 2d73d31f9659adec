"""Live-loop tests: the console channel drives a real session against the
wrench simulator over its TCP endpoint, through the FastAPI WebSocket."""

import time

from fastapi.testclient import TestClient

from torqueflow.report import read_report
from torqueflow.scene import bundled_scene_path, load_scene
from torqueflow.server import ServeConfig, create_app
from torqueflow.session import Method


def make_client(tmp_path, method=Method.AR_GUIDED, ramp_rate=20000.0):
    cfg = ServeConfig(
        scene_path=str(bundled_scene_path()),
        scenario_id="seq1",
        method=method,
        wrench_port=0,               # ephemeral; tests must not squat 7401
        out_dir=str(tmp_path / "out"),
        ramp_rate=ramp_rate,
    )
    app = create_app(cfg)
    return TestClient(app)


def drain_until(ws, predicate, timeout=10.0):
    """Read channel messages until predicate(msg) or timeout."""
    deadline = time.time() + timeout
    seen = []
    while time.time() < deadline:
        msg = ws.receive_json()
        seen.append(msg)
        if predicate(msg):
            return msg, seen
    raise AssertionError(f"condition not met; last messages: {seen[-5:]}")


def event_is(msg, kind):
    return msg.get("type") == "event" and msg["event"].get("kind") == kind


def test_full_guided_session_over_console_channel(tmp_path):
    scene = load_scene(bundled_scene_path())
    scenario = scene.scenario("seq1")
    client = make_client(tmp_path)
    with client:
        with client.websocket_connect("/ws") as ws:
            hello = ws.receive_json()
            assert hello["type"] == "hello"
            assert hello["method"] == "AR_GUIDED"
            assert len(hello["scenario"]["steps"]) == 10
            sites = {(p["part_id"], s["site_id"]): (s["x"], s["y"])
                     for p in hello["parts"] for s in p["sites"]}

            for step in scenario.steps:
                x, y = sites[step.site_key]
                ws.send_json({"type": "pose", "x": x, "y": y})
                drain_until(ws, lambda m: event_is(m, "TARGET_PUSHED"))
                ws.send_json({"type": "press"})
                drain_until(ws, lambda m: event_is(m, "STEP_VALIDATED"))
                ws.send_json({"type": "release"})
                # park away from the parts between steps
                ws.send_json({"type": "pose", "x": -200.0, "y": -200.0})

            final, _ = drain_until(ws, lambda m: event_is(m, "SESSION_END"))
            assert final["event"]["duration_s"] > 0

    out_dirs = list((tmp_path / "out").iterdir())
    assert len(out_dirs) == 1
    report = read_report(out_dirs[0] / "report.csv")
    assert len(report.rows) == 10
    assert all(r.validated and r.peak_applied_cnm >= r.target_cnm
               for r in report.rows)


def test_second_console_rejected_while_occupied(tmp_path):
    client = make_client(tmp_path)
    with client:
        with client.websocket_connect("/ws") as ws1:
            assert ws1.receive_json()["type"] == "hello"
            with client.websocket_connect("/ws") as ws2:
                msg = ws2.receive_json()
                assert msg == {"type": "error", "reason": "session occupied"}


def test_reconnect_replays_event_log(tmp_path):
    scene = load_scene(bundled_scene_path())
    client = make_client(tmp_path)
    step0 = scene.scenario("seq1").steps[0]
    head = scene.world_head_point(*step0.site_key)
    with client:
        with client.websocket_connect("/ws") as ws:
            assert ws.receive_json()["type"] == "hello"
            ws.send_json({"type": "pose", "x": head[0], "y": head[1]})
            _, seen = drain_until(ws, lambda m: event_is(m, "TARGET_PUSHED"))
            events_first = [m["event"] for m in seen if m.get("type") == "event"]
            assert any(e["kind"] == "ENGAGE" for e in events_first)
        # reconnect: the full log so far must be replayed in order
        with client.websocket_connect("/ws") as ws:
            assert ws.receive_json()["type"] == "hello"
            _, seen = drain_until(ws, lambda m: event_is(m, "TARGET_PUSHED"))
            replayed = [m["event"] for m in seen if m.get("type") == "event"]
            kinds = [e["kind"] for e in replayed]
            assert kinds[0] == "SESSION_START"
            assert "ENGAGE" in kinds and "GUIDANCE_SHOWN" in kinds


def test_shutdown_aborts_unfinished_session(tmp_path):
    client = make_client(tmp_path)
    with client:
        with client.websocket_connect("/ws") as ws:
            assert ws.receive_json()["type"] == "hello"
            ws.send_json({"type": "pose", "x": 0.0, "y": 0.0})
            drain_until(ws, lambda m: event_is(m, "ENGAGE"))
    # leaving the `with client` block runs shutdown
    out_dirs = list((tmp_path / "out").iterdir())
    assert len(out_dirs) == 1
    events = (out_dirs[0] / "events.jsonl").read_text().splitlines()
    assert '"SESSION_ABORTED"' in events[-1]
    assert "server shutdown" in events[-1]


def test_conventional_mode_manual_flow(tmp_path):
    scene = load_scene(bundled_scene_path())
    scenario = scene.scenario("seq1")
    client = make_client(tmp_path, method=Method.CONVENTIONAL)
    step = scenario.steps[0]
    head = scene.world_head_point(*step.site_key)
    with client:
        with client.websocket_connect("/ws") as ws:
            hello = ws.receive_json()
            assert hello["method"] == "CONVENTIONAL"
            ws.send_json({"type": "manual_set", "target_cnm": step.target_cnm})
            drain_until(ws, lambda m: event_is(m, "MANUAL_SET"))
            ws.send_json({"type": "pose", "x": head[0], "y": head[1]})
            drain_until(ws, lambda m: event_is(m, "ENGAGE"))
            ws.send_json({"type": "press"})
            drain_until(ws, lambda m: event_is(m, "REACHED"))
            ws.send_json({"type": "release"})
            ws.send_json({"type": "manual_log", "part_id": step.part_id,
                          "site_id": step.site_id, "torque_cnm": step.target_cnm})
            drain_until(ws, lambda m: event_is(m, "MANUAL_LOG_ENTRY"))
            ws.send_json({"type": "done"})
            drain_until(ws, lambda m: event_is(m, "SESSION_END"))
    out_dirs = list((tmp_path / "out").iterdir())
    report = read_report(out_dirs[0] / "report.csv")
    row = next(r for r in report.rows if r.site_id == step.site_id)
    assert row.validated


def test_console_assets_served_when_built(tmp_path):
    client = make_client(tmp_path)
    with client:
        resp = client.get("/")
        assert resp.status_code == 200
        if "torqueflow operator console" in resp.text:
            js = client.get("/js/app.js")
            assert js.status_code == 200
            assert "applyServerMessage" in js.text
        else:
            # assets not built in this checkout: the fallback page explains how
            assert "not built" in resp.text
