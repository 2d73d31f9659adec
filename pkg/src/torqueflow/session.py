"""The session engine.

Runs one tightening scenario either AR-guided (sequence enforced, targets
pushed to the wrench automatically, steps validated by pose + torque) or
conventional (operator sets targets and keeps the log by hand), emitting an
append-only event log from which the guidance stream, the traceability
report and all study metrics derive.

The engine is a single logical event loop: each tick it consumes the reported
wrench pose, tracking events, wrench protocol messages and operator commands,
in that order. Nothing mutates session state outside these handlers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .protocol import (
    HEARTBEAT_MISS_LIMIT,
    HEARTBEAT_PERIOD_MS,
    MsgType,
    ProtocolError,
    WrenchMessage,
)
from .scene import Scenario, Scene
from .tracking import (
    NOT_TRACKING,
    EngagementState,
    SiteIndex,
    TrackingConfig,
    classify_engagement,
)
from .wrench import LinkDown, WrenchLink


class Method(str, Enum):
    AR_GUIDED = "AR_GUIDED"
    CONVENTIONAL = "CONVENTIONAL"


class EventKind(str, Enum):
    SESSION_START = "SESSION_START"
    ENGAGE = "ENGAGE"
    DISENGAGE = "DISENGAGE"
    TARGET_PUSHED = "TARGET_PUSHED"
    TORQUE_APPLIED = "TORQUE_APPLIED"
    REACHED = "REACHED"
    STEP_VALIDATED = "STEP_VALIDATED"
    MANUAL_SET = "MANUAL_SET"
    MANUAL_LOG_ENTRY = "MANUAL_LOG_ENTRY"
    TRACKING_LOST = "TRACKING_LOST"
    TRACKING_REDETECTED = "TRACKING_REDETECTED"
    GUIDANCE_SHOWN = "GUIDANCE_SHOWN"
    SESSION_END = "SESSION_END"
    SESSION_ABORTED = "SESSION_ABORTED"


class StepPhase(str, Enum):
    AWAIT_ENGAGE = "AWAIT_ENGAGE"
    ENGAGED = "ENGAGED"
    TIGHTENING = "TIGHTENING"
    VALIDATED = "VALIDATED"


@dataclass(frozen=True)
class SessionEvent:
    ts_ms: int
    kind: EventKind
    payload: dict

    def to_json(self) -> str:
        obj = {"ts_ms": self.ts_ms, "kind": self.kind.value}
        obj.update(self.payload)
        return json.dumps(obj, separators=(",", ":"))


class EventLogError(ValueError):
    def __init__(self, message: str, line_no: int = 0):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


@dataclass
class _Episode:
    """One press-to-release torque application, reconstructed from telemetry."""

    site: tuple[str, str] | None
    target: int | None
    peak: int = 0
    reached: bool = False
    site_at_reach: tuple[str, str] | None = None


@dataclass(frozen=True)
class EpisodeRecord:
    site: tuple[str, str] | None
    target_cnm: int | None
    peak_cnm: int
    reached: bool
    ts_ms: int


@dataclass(frozen=True)
class ReportRow:
    part_id: str
    site_id: str
    target_cnm: int
    peak_applied_cnm: int
    validated: bool
    ts_ms: int


@dataclass(frozen=True)
class TighteningReport:
    session_id: str
    method: Method
    rows: tuple[ReportRow, ...]
    total_duration_s: float


class Session:
    """One tightening session over one scenario."""

    def __init__(
        self,
        *,
        scenario: Scenario,
        scene: Scene,
        link: WrenchLink,
        method: Method,
        session_id: str,
        engage_cfg: TrackingConfig | None = None,
        t0_ms: int = 0,
        config_note: dict | None = None,
    ):
        self.scenario = scenario
        self.scene = scene
        self.link = link
        self.method = method
        self.session_id = session_id
        self.engage_cfg = engage_cfg or TrackingConfig()
        self.t0_ms = t0_ms
        self._index = SiteIndex(scene.parts)

        self.events: list[SessionEvent] = []
        self._last_ts = t0_ms - 1
        self.engagement: EngagementState = EngagementState()
        self.step_index = 0
        self.step_phase = StepPhase.AWAIT_ENGAGE
        self.active = True
        self.aborted = False
        self._end_ts = t0_ms

        self._seq = 0
        self._pending: dict[int, int] = {}   # outgoing seq -> target awaiting ACK
        self._wrench_target: int | None = None
        self._episode: _Episode | None = None
        self.episodes: list[EpisodeRecord] = []
        self._validated: dict[int, tuple[int, int]] = {}  # step -> (peak, ts)
        self._last_ping_ms = t0_ms
        self._pings_unanswered = 0

        start = {
            "session_id": session_id,
            "method": method.value,
            "scenario_id": scenario.scenario_id,
            "n_steps": len(scenario),
        }
        if config_note:
            start["config"] = config_note
        self._emit(t0_ms, EventKind.SESSION_START, start)
        if method == Method.AR_GUIDED:
            self._emit_arrow(t0_ms)

    # -- event plumbing -------------------------------------------------------

    def _emit(self, ts_ms: int, kind: EventKind, payload: dict) -> SessionEvent:
        # Events are strictly ordered by timestamp; same-tick events get
        # bumped forward by a millisecond.
        ts = max(int(ts_ms), self._last_ts + 1)
        self._last_ts = ts
        ev = SessionEvent(ts, kind, payload)
        self.events.append(ev)
        return ev

    def _current_step(self):
        if self.step_index < len(self.scenario.steps):
            return self.scenario.steps[self.step_index]
        return None

    def _emit_arrow(self, ts: int) -> None:
        step = self._current_step()
        if step is None:
            return
        self._emit(ts, EventKind.GUIDANCE_SHOWN, {
            "display": "arrow",
            "step_index": self.step_index,
            "part_id": step.part_id,
            "site_id": step.site_id,
            "target_cnm": step.target_cnm,
        })

    # -- per-tick input -------------------------------------------------------

    def on_tick(self, ts_ms: int, reported_pose, tracking_events=()) -> None:
        """Feed one tick: reported wrench pose (None while tracking is lost)
        plus any tracking events that occurred during the tick."""
        if not self.active:
            return
        for tev in tracking_events:
            if tev == "loss":
                self._emit(ts_ms, EventKind.TRACKING_LOST, {})
            elif tev == "redetect":
                self._emit(ts_ms, EventKind.TRACKING_REDETECTED, {})
        if reported_pose is None:
            new_eng = NOT_TRACKING
        else:
            new_eng = classify_engagement(
                reported_pose, self.scene.tool, self.scene.parts, self.engage_cfg,
                tracking_ok=True, index=self._index,
            )
        self._apply_engagement(ts_ms, new_eng)
        if not self.active:
            return
        self._heartbeat(ts_ms)
        if self.active:
            self._pump(ts_ms)

    def _apply_engagement(self, ts: int, new: EngagementState) -> None:
        old = self.engagement
        self.engagement = new
        if old.engaged_site == new.engaged_site:
            return
        step = self._current_step()
        if old.engaged_site is not None:
            self._emit(ts, EventKind.DISENGAGE, {
                "part_id": old.engaged_site[0], "site_id": old.engaged_site[1],
            })
            if step is not None and old.engaged_site == step.site_key \
                    and self.step_phase in (StepPhase.ENGAGED, StepPhase.TIGHTENING):
                self.step_phase = StepPhase.AWAIT_ENGAGE
        if new.engaged_site is not None:
            self._emit(ts, EventKind.ENGAGE, {
                "part_id": new.engaged_site[0], "site_id": new.engaged_site[1],
                "tip_distance_mm": round(new.tip_distance, 3),
            })
            if self.method == Method.AR_GUIDED and step is not None:
                if new.engaged_site == step.site_key:
                    self.step_phase = StepPhase.ENGAGED
                    self._push_target(ts, step)
                else:
                    # Wrong site: no push, just point the operator back at the
                    # current target.
                    self._emit_arrow(ts)
            elif step is not None and new.engaged_site == step.site_key:
                self.step_phase = StepPhase.ENGAGED

    def _heartbeat(self, ts: int) -> None:
        if ts - self._last_ping_ms < HEARTBEAT_PERIOD_MS:
            return
        if self._pings_unanswered >= HEARTBEAT_MISS_LIMIT:
            self.abort(ts, "wrench heartbeat lost")
            return
        self._last_ping_ms = ts
        self._pings_unanswered += 1
        try:
            self.link.send(WrenchMessage(MsgType.PING, self._next_seq(), ts_ms=ts))
        except (LinkDown, OSError):
            self.abort(ts, "wrench disconnected")

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _push_target(self, ts: int, step) -> None:
        """AR auto-push: arm the wrench with the current step's target."""
        self._close_episode(ts)
        seq = self._next_seq()
        try:
            self.link.send(WrenchMessage(MsgType.SET_TARGET, seq,
                                         target_cnm=step.target_cnm, ts_ms=ts))
        except (LinkDown, OSError):
            self.abort(ts, "wrench disconnected")
            return
        self._pending[seq] = step.target_cnm
        self._emit(ts, EventKind.TARGET_PUSHED, {
            "step_index": self.step_index,
            "part_id": step.part_id,
            "site_id": step.site_id,
            "target_cnm": step.target_cnm,
            "seq": seq,
        })

    # -- wrench traffic -------------------------------------------------------

    def _pump(self, ts: int) -> None:
        for msg in self.link.poll():
            if not self.active:
                return
            if msg.msg_type == MsgType.ACK:
                target = self._pending.pop(msg.ref, None)
                if target is not None:
                    self._wrench_target = target
            elif msg.msg_type == MsgType.NACK:
                if self._pending.pop(msg.ref, None) is None:
                    # Spontaneous device NACK: effort with no target armed.
                    self._emit(ts, EventKind.GUIDANCE_SHOWN,
                               {"display": "nack", "reason": "not_armed"})
                else:
                    self._emit(ts, EventKind.GUIDANCE_SHOWN,
                               {"display": "nack", "reason": "target_rejected"})
            elif msg.msg_type == MsgType.PONG:
                self._pings_unanswered = 0
            elif msg.msg_type == MsgType.TELEMETRY:
                self._on_telemetry(ts, msg)
            elif msg.msg_type == MsgType.TARGET_REACHED:
                self._on_reached(ts, msg)
        if not self.link.alive and self.active:
            self.abort(ts, "wrench disconnected")

    def _on_telemetry(self, ts: int, msg: WrenchMessage) -> None:
        applied = msg.applied_cnm
        if self._episode is None:
            if applied > 0:
                self._episode = _Episode(site=self.engagement.engaged_site,
                                         target=self._wrench_target, peak=applied)
                step = self._current_step()
                if step is not None and self.engagement.engaged_site == step.site_key:
                    self.step_phase = StepPhase.TIGHTENING
            return
        self._episode.peak = max(self._episode.peak, applied)
        if applied == 0:
            self._close_episode(ts)

    def _on_reached(self, ts: int, msg: WrenchMessage) -> None:
        if self._episode is None:
            self._episode = _Episode(site=self.engagement.engaged_site,
                                     target=self._wrench_target)
        ep = self._episode
        ep.reached = True
        ep.peak = max(ep.peak, msg.peak_cnm)
        ep.site_at_reach = self.engagement.engaged_site
        self._emit(ts, EventKind.REACHED, {
            "target_cnm": self._wrench_target,
            "peak_cnm": msg.peak_cnm,
        })
        if self.method != Method.AR_GUIDED:
            return
        step = self._current_step()
        if step is None:
            return
        # Validation is a conjunction sampled at the reach instant: the tip
        # must be engaged on the step's own site and the armed target must be
        # the step's programmed value.
        if self.engagement.engaged_site == step.site_key \
                and self._wrench_target == step.target_cnm:
            self._validate_step(ts, step, msg.peak_cnm)

    def _validate_step(self, ts: int, step, peak_cnm: int) -> None:
        self._validated[self.step_index] = (peak_cnm, ts)
        self.step_phase = StepPhase.VALIDATED
        self._emit(ts, EventKind.STEP_VALIDATED, {
            "step_index": self.step_index,
            "part_id": step.part_id,
            "site_id": step.site_id,
            "target_cnm": step.target_cnm,
            "peak_cnm": peak_cnm,
        })
        self._emit(ts, EventKind.GUIDANCE_SHOWN, {
            "display": "done",
            "step_index": self.step_index,
            "part_id": step.part_id,
            "site_id": step.site_id,
        })
        self.step_index += 1
        if self.step_index >= len(self.scenario.steps):
            self.finish(ts)
        else:
            self.step_phase = StepPhase.AWAIT_ENGAGE
            self._emit_arrow(ts)

    def _close_episode(self, ts: int) -> None:
        ep = self._episode
        if ep is None:
            return
        self._episode = None
        site = ep.site_at_reach if ep.reached else ep.site
        record = EpisodeRecord(site, ep.target, ep.peak, ep.reached, ts)
        self.episodes.append(record)
        self._emit(ts, EventKind.TORQUE_APPLIED, {
            "part_id": site[0] if site else None,
            "site_id": site[1] if site else None,
            "target_cnm": ep.target,
            "peak_cnm": ep.peak,
            "reached": ep.reached,
        })
        if self.step_phase == StepPhase.TIGHTENING:
            step = self._current_step()
            if step is not None:
                self.step_phase = (StepPhase.ENGAGED
                                   if self.engagement.engaged_site == step.site_key
                                   else StepPhase.AWAIT_ENGAGE)

    # -- operator commands ----------------------------------------------------

    def on_operator_command(self, ts: int, cmd: dict) -> None:
        """Handle one operator/UI command: manual_set, manual_log, done."""
        if not self.active:
            return
        kind = cmd.get("cmd")
        if self.method == Method.AR_GUIDED:
            # Manual wrench control is a conventional-mode affordance; the
            # guided session ignores it (the console also rejects it locally).
            return
        if kind == "manual_set":
            self._manual_set(ts, cmd["target_cnm"])
        elif kind == "manual_log":
            self._emit(ts, EventKind.MANUAL_LOG_ENTRY, {
                "part_id": cmd["part_id"],
                "site_id": cmd["site_id"],
                "torque_cnm": int(cmd["torque_cnm"]),
            })
        elif kind == "done":
            self.finish(ts)

    def _manual_set(self, ts: int, target_cnm: int) -> None:
        self._close_episode(ts)
        seq = self._next_seq()
        try:
            self.link.send(WrenchMessage(MsgType.SET_TARGET, seq,
                                         target_cnm=int(target_cnm), ts_ms=ts))
        except ProtocolError:
            self._emit(ts, EventKind.MANUAL_SET,
                       {"target_cnm": int(target_cnm), "sent": False})
            self._emit(ts, EventKind.GUIDANCE_SHOWN,
                       {"display": "nack", "reason": "invalid_target"})
            return
        except (LinkDown, OSError):
            self.abort(ts, "wrench disconnected")
            return
        self._pending[seq] = int(target_cnm)
        self._emit(ts, EventKind.MANUAL_SET, {"target_cnm": int(target_cnm), "sent": True})

    # -- lifecycle --------------------------------------------------------

    def _duration_s(self, ts: int) -> float:
        return round(max(ts - self.t0_ms, 0) / 1000.0, 3)

    def finish(self, ts: int) -> None:
        if not self.active:
            return
        self._close_episode(ts)
        self.active = False
        self._emit(ts, EventKind.SESSION_END, {"duration_s": self._duration_s(ts)})
        self._end_ts = self.events[-1].ts_ms

    def abort(self, ts: int, reason: str) -> None:
        if not self.active:
            return
        self._close_episode(ts)
        self.active = False
        self.aborted = True
        self._emit(ts, EventKind.SESSION_ABORTED,
                   {"reason": reason, "duration_s": self._duration_s(ts)})
        self._end_ts = self.events[-1].ts_ms

    # -- outputs ----------------------------------------------------------

    def manual_log(self) -> list[dict]:
        return [e.payload for e in self.events if e.kind == EventKind.MANUAL_LOG_ENTRY]

    def report(self) -> TighteningReport:
        """Traceability report: exactly one row per scenario step."""
        if self.active:
            raise RuntimeError("session still running")
        rows = []
        for i, step in enumerate(self.scenario.steps):
            if self.method == Method.AR_GUIDED:
                if i in self._validated:
                    peak, ts = self._validated[i]
                    rows.append(ReportRow(step.part_id, step.site_id,
                                          step.target_cnm, peak, True, ts))
                else:
                    rows.append(ReportRow(step.part_id, step.site_id,
                                          step.target_cnm, 0, False, 0))
            else:
                eps = [e for e in self.episodes if e.site == step.site_key]
                peak = max((e.peak_cnm for e in eps), default=0)
                validated = any(e.reached and e.peak_cnm >= step.target_cnm for e in eps)
                ts = max((e.ts_ms for e in eps), default=0)
                rows.append(ReportRow(step.part_id, step.site_id,
                                      step.target_cnm, peak, validated, ts))
        duration = (self._end_ts - self.t0_ms) / 1000.0
        return TighteningReport(self.session_id, self.method, tuple(rows),
                                round(duration, 3))


# -- event log files ----------------------------------------------------------


def write_event_log(events, path) -> None:
    Path(path).write_bytes(events_to_bytes(events))


def events_to_bytes(events) -> bytes:
    return b"".join(e.to_json().encode("utf-8") + b"\n" for e in events)


def read_event_log(path) -> list[SessionEvent]:
    """Parse and validate a session event log; errors carry the line number."""
    events: list[SessionEvent] = []
    last_ts = None
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip(b"\n")
            if not line:
                raise EventLogError("blank line in event log", line_no)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise EventLogError(f"not valid JSON: {e.msg}", line_no) from e
            if not isinstance(obj, dict):
                raise EventLogError("event must be a JSON object", line_no)
            try:
                ts = obj.pop("ts_ms")
                kind = EventKind(obj.pop("kind"))
            except (KeyError, ValueError) as e:
                raise EventLogError(f"bad event header: {e}", line_no) from e
            if not isinstance(ts, int):
                raise EventLogError("ts_ms must be an integer", line_no)
            if last_ts is not None and ts <= last_ts:
                raise EventLogError(f"timestamps not strictly increasing "
                                    f"({ts} after {last_ts})", line_no)
            last_ts = ts
            events.append(SessionEvent(ts, kind, obj))
    if not events:
        raise EventLogError("empty event log", 1)
    if events[0].kind != EventKind.SESSION_START:
        raise EventLogError("log must start with SESSION_START", 1)
    if events[-1].kind not in (EventKind.SESSION_END, EventKind.SESSION_ABORTED):
        raise EventLogError("log must end with SESSION_END or SESSION_ABORTED",
                            len(events))
    return events


# -- guidance stream ----------------------------------------------------------


def guidance_stream(events) -> list[dict]:
    """Derive the ordered guidance frames shown to the operator from a log.

    Pure over the event log, so replaying a recorded session reproduces the
    stream byte for byte.
    """
    frames: list[dict] = []
    for e in events:
        if e.kind == EventKind.GUIDANCE_SHOWN:
            p = e.payload
            if p.get("display") == "arrow":
                frames.append({"op": "arrow", "step_index": p["step_index"],
                               "part_id": p["part_id"], "site_id": p["site_id"],
                               "target_cnm": p["target_cnm"]})
            elif p.get("display") == "done":
                frames.append({"op": "done", "step_index": p["step_index"],
                               "part_id": p["part_id"], "site_id": p["site_id"]})
            elif p.get("display") == "nack":
                frames.append({"op": "nack", "reason": p.get("reason", "")})
        elif e.kind == EventKind.TORQUE_APPLIED:
            if e.payload.get("part_id") is not None:
                frames.append({"op": "applied", "part_id": e.payload["part_id"],
                               "site_id": e.payload["site_id"],
                               "applied_cnm": e.payload["peak_cnm"]})
        elif e.kind == EventKind.TRACKING_LOST:
            frames.append({"op": "tracking", "ok": False})
        elif e.kind == EventKind.TRACKING_REDETECTED:
            frames.append({"op": "tracking", "ok": True})
    return frames


def guidance_to_bytes(frames) -> bytes:
    return b"".join(json.dumps(f, separators=(",", ":")).encode("utf-8") + b"\n"
                    for f in frames)
