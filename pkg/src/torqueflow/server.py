"""Live service: hosts the simulated wrench behind its TCP endpoint, runs the
session engine on a real-time loop, and exposes the console channel (a
WebSocket carrying the same JSON-per-message discipline as the wire format)
plus the operator-console static assets.

One operator at a time: the first console connection starts the session,
later ones are refused while it is attached. A reconnect replays the full
event log so the console can rebuild the identical view. Shutting the server
down mid-session aborts it and still writes the partial artifacts.
"""

from __future__ import annotations

import asyncio
import json
import logging
import queue
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .geometry import Pose
from .scene import Scene, load_scene
from .session import Method, Session
from .simulate import SessionResult, write_session_artifacts
from .tracking import TrackingConfig
from .wrench import TcpWrenchLink, WrenchDeviceServer, RampConfig

logger = logging.getLogger("torqueflow.server")

TICK_S = 0.02
STATE_PERIOD_S = 0.1


@dataclass
class ServeConfig:
    scene_path: str
    scenario_id: str
    method: Method = Method.AR_GUIDED
    wrench_port: int = 7401
    console_port: int = 8080
    out_dir: str = "out"
    engage_threshold: float = 15.0
    ramp_rate: float = 600.0
    assets_dir: str | None = None
    session_id: str = "live-000"


class LiveSessionManager:
    """Owns the device server, the wrench link and the session loop thread."""

    def __init__(self, cfg: ServeConfig, scene: Scene):
        self.cfg = cfg
        self.scene = scene
        self.scenario = scene.scenario(cfg.scenario_id)
        self.engage_cfg = TrackingConfig(drift_rate=0.0, loss_rate=0.0,
                                         engage_threshold=cfg.engage_threshold)
        self.device_server = WrenchDeviceServer(
            RampConfig(ramp_rate=cfg.ramp_rate), port=cfg.wrench_port)
        self.link: TcpWrenchLink | None = None
        self.session: Session | None = None
        self._t0 = 0.0
        self._inputs: "queue.Queue[dict]" = queue.Queue()
        self._true_pose: Pose | None = None
        self._effort = False
        self._clients: list[queue.Queue] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="live-session",
                                        daemon=True)
        self._events_sent = 0
        self._next_state_at = 0.0
        self.artifact_dir: Path | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self.device_server.start()
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=3.0)
        if self.link is not None:
            self.link.close()
        self.device_server.stop()

    def _now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def _ensure_session(self) -> None:
        if self.session is not None:
            return
        self.link = TcpWrenchLink("127.0.0.1", self.device_server.port)
        self._t0 = time.monotonic()
        self.session = Session(
            scenario=self.scenario, scene=self.scene, link=self.link,
            method=self.cfg.method, session_id=self.cfg.session_id,
            engage_cfg=self.engage_cfg,
            config_note={"live": True, "scenario": self.cfg.scenario_id},
        )

    # -- console attachment --------------------------------------------------

    def attach(self) -> queue.Queue | None:
        """Register a console; returns its outbox, or None when occupied."""
        with self._lock:
            if self._clients:
                return None
            self._ensure_session()
            outbox: queue.Queue = queue.Queue()
            outbox.put(self._hello())
            for ev in self.session.events:
                outbox.put({"type": "event", "event": json.loads(ev.to_json())})
            self._events_sent = len(self.session.events)
            self._clients.append(outbox)
            return outbox

    def detach(self, outbox: queue.Queue) -> None:
        with self._lock:
            if outbox in self._clients:
                self._clients.remove(outbox)

    def submit(self, msg: dict) -> None:
        self._inputs.put(msg)

    def _hello(self) -> dict:
        parts = []
        for part in self.scene.parts:
            sites = []
            for s in part.sites:
                w = part.mount_pose.apply(s.head_point)
                sites.append({"site_id": s.site_id, "x": w[0], "y": w[1]})
            parts.append({"part_id": part.part_id, "sites": sites})
        return {
            "type": "hello",
            "session_id": self.cfg.session_id,
            "method": self.cfg.method.value,
            "engage_threshold": self.engage_cfg.engage_threshold,
            "scenario": {
                "scenario_id": self.scenario.scenario_id,
                "steps": [[s.part_id, s.site_id, s.target_cnm]
                          for s in self.scenario.steps],
            },
            "parts": parts,
        }

    # -- the loop -------------------------------------------------------------

    def _apply_input(self, msg: dict) -> list[dict]:
        kind = msg.get("type")
        if kind == "pose":
            ox, oy, oz = self.scene.tool.bit_tip_offset.translation
            tip = (float(msg["x"]), float(msg["y"]), float(msg.get("z", 0.0)))
            self._true_pose = Pose((tip[0] - ox, tip[1] - oy, tip[2] - oz))
        elif kind == "press":
            self._effort = True
        elif kind == "release":
            self._effort = False
        elif kind == "manual_set":
            return [{"cmd": "manual_set", "target_cnm": msg["target_cnm"]}]
        elif kind == "manual_log":
            return [{"cmd": "manual_log", "part_id": msg["part_id"],
                     "site_id": msg["site_id"], "torque_cnm": msg["torque_cnm"]}]
        elif kind == "done":
            return [{"cmd": "done"}]
        return []

    def _broadcast(self, payload: dict) -> None:
        with self._lock:
            for outbox in self._clients:
                outbox.put(payload)

    def _run(self) -> None:
        while not self._stop.is_set():
            session = self.session
            if session is None:
                time.sleep(TICK_S)
                continue
            ts = self._now_ms()
            commands: list[dict] = []
            while True:
                try:
                    commands.extend(self._apply_input(self._inputs.get_nowait()))
                except queue.Empty:
                    break
            if session.active:
                self.device_server.set_effort(self._effort)
                session.on_tick(ts, self._true_pose)
                for cmd in commands:
                    session.on_operator_command(ts, cmd)
            # Stream any new events to the attached console.
            with self._lock:
                while self._events_sent < len(session.events):
                    ev = session.events[self._events_sent]
                    self._events_sent += 1
                    for outbox in self._clients:
                        outbox.put({"type": "event",
                                    "event": json.loads(ev.to_json())})
            now = time.monotonic()
            if now >= self._next_state_at:
                self._next_state_at = now + STATE_PERIOD_S
                self._broadcast(self._state_message())
            if not session.active and self.artifact_dir is None:
                self._write_artifacts()
            time.sleep(TICK_S)
        if self.session is not None and self.session.active:
            self.session.abort(self._now_ms(), "server shutdown")
        if self.session is not None and self.artifact_dir is None:
            self._write_artifacts()

    def _state_message(self) -> dict:
        st = self.device_server.state
        session = self.session
        eng = session.engagement if session else None
        pose = self._true_pose.translation if self._true_pose else None
        tip = None
        if self._true_pose is not None:
            ox, oy, oz = self.scene.tool.bit_tip_offset.translation
            tip = [pose[0] + ox, pose[1] + oy, pose[2] + oz]
        led = st.led
        return {
            "type": "state",
            "wrench": {
                "mode": st.mode.value,
                "target_cnm": st.target_cnm,
                "applied_cnm": st.applied_cnm,
                "peak_cnm": st.peak_cnm,
                "led": {"lit_segments": led.lit_segments, "red": led.red},
            },
            "engagement": (
                {"part_id": eng.engaged_site[0], "site_id": eng.engaged_site[1],
                 "tip_distance_mm": round(eng.tip_distance, 2)}
                if eng and eng.engaged_site else None
            ),
            "tracking_ok": eng.tracking_ok if eng else True,
            "tip": tip,
            "step_index": session.step_index if session else 0,
            "active": bool(session and session.active),
        }

    def _write_artifacts(self) -> None:
        session = self.session
        result = SessionResult(session, session.report(), session.manual_log())
        out = Path(self.cfg.out_dir) / session.session_id
        write_session_artifacts(result, out)
        self.artifact_dir = out
        logger.info("session artifacts written to %s", out)


FALLBACK_PAGE = """<!doctype html>
<html><head><title>torqueflow</title></head>
<body><h1>torqueflow console</h1>
<p>The operator console assets are not built. Run <code>npm install &amp;&amp;
npm run build</code> in <code>frontend/</code>, then restart the server, or
connect a WebSocket client to <code>/ws</code> directly.</p>
</body></html>"""


def find_assets_dir(cfg: ServeConfig) -> Path | None:
    candidates = []
    if cfg.assets_dir:
        candidates.append(Path(cfg.assets_dir))
    candidates.append(Path.cwd() / "frontend" / "dist")
    candidates.append(Path(__file__).resolve().parents[2] / "frontend" / "dist")
    for c in candidates:
        if (c / "index.html").exists():
            return c
    return None


def create_app(cfg: ServeConfig, scene: Scene | None = None) -> FastAPI:
    scene = scene or load_scene(cfg.scene_path)
    manager = LiveSessionManager(cfg, scene)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        manager.start()
        yield
        manager.stop()

    app = FastAPI(title="torqueflow console channel", lifespan=lifespan)
    app.state.manager = manager

    @app.websocket("/ws")
    async def console_channel(ws: WebSocket) -> None:
        await ws.accept()
        outbox = manager.attach()
        if outbox is None:
            await ws.send_json({"type": "error", "reason": "session occupied"})
            await ws.close()
            return

        async def sender() -> None:
            while True:
                try:
                    item = outbox.get_nowait()
                except queue.Empty:
                    await asyncio.sleep(0.01)
                    continue
                await ws.send_json(item)

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_json({"type": "error", "reason": "bad json"})
                    continue
                if isinstance(msg, dict):
                    manager.submit(msg)
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            manager.detach(outbox)

    assets = find_assets_dir(cfg)
    if assets is not None:
        app.mount("/", StaticFiles(directory=str(assets), html=True),
                  name="console")
    else:
        @app.get("/")
        def index() -> HTMLResponse:
            return HTMLResponse(FALLBACK_PAGE)

    return app


def serve(cfg: ServeConfig) -> None:
    import uvicorn

    app = create_app(cfg)
    print(f"wrench endpoint : tcp://127.0.0.1:{app.state.manager.device_server.port}")
    print(f"console channel : ws://127.0.0.1:{cfg.console_port}/ws")
    print(f"console UI      : http://127.0.0.1:{cfg.console_port}/")
    uvicorn.run(app, host="127.0.0.1", port=cfg.console_port, log_level="warning")
