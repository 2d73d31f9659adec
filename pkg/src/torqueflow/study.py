"""Builder for the bundled calibrated study fixture.

Synthesizes a full 34-participant, two-method study bundle whose aggregates
land on fixed reference values: mean execution times 623 s / 339 s with a
global minimum of 300 s, 23 / 0 sessions with errors (16 wrong order, 10
wrong screw, 3 stale torque on the conventional side), usability means of
73.1 / 74.4 and task-load means of 7.0 / 5.1 to within questionnaire
granularity.

Event logs are synthetic but structurally real: they parse, validate and
classify through the same code paths as simulated sessions. The generator
asserts the classifier sees exactly the intended flags for every session it
writes, so the fixture can never drift from the classifier.
"""

from __future__ import annotations

import json
from pathlib import Path

from .metrics import ErrorFlags, classify_errors, score_sus
from .operator import nearest_off_scenario_site
from .report import write_report
from .scene import Scenario, Scene, build_bench_scene
from .session import (
    EventKind,
    Method,
    ReportRow,
    SessionEvent,
    TighteningReport,
    write_event_log,
)

N_PARTICIPANTS = 34

AR_MEAN_S = 339
CONV_MEAN_S = 623
GLOBAL_MIN_S = 300

# Error-flag layout over the 34 conventional sessions: 16 wrong-order, 10
# wrong-screw, 3 stale-torque, overlapping so exactly 23 sessions err.
def _conventional_flags(p: int) -> ErrorFlags:
    wrong_order = p <= 15
    wrong_screw = p <= 4 or 16 <= p <= 20
    stale = p == 5 or p in (21, 22)
    return ErrorFlags(wrong_order, wrong_screw, stale)


def _ints_with_sum(n: int, total: int, base: int, wobble, lo: int, hi: int) -> list[int]:
    """n varied integers in [lo, hi] that sum exactly to total."""
    vals = [base + wobble(i) for i in range(n)]
    vals[0] += total - sum(vals)
    assert sum(vals) == total
    assert all(lo <= v <= hi for v in vals), vals
    return vals


def ar_times_s() -> list[int]:
    rest = _ints_with_sum(N_PARTICIPANTS - 1, N_PARTICIPANTS * AR_MEAN_S - GLOBAL_MIN_S,
                          340, lambda i: (i * 11) % 21 - 10, 305, 420)
    return [GLOBAL_MIN_S] + rest


def conventional_times_s() -> list[int]:
    return _ints_with_sum(N_PARTICIPANTS, N_PARTICIPANTS * CONV_MEAN_S,
                          623, lambda i: (i * 13) % 41 - 20, 560, 700)


def _paired_spread(vals: list[int], period: int) -> list[int]:
    """Symmetric per-pair offsets that keep the sum fixed."""
    out = list(vals)
    n = len(out)
    for i in range(n // 2):
        d = i % period
        out[i] += d
        out[n - 1 - i] -= d
    return out


def _sus_u_values(total_u: int) -> list[int]:
    base, rem = divmod(total_u, N_PARTICIPANTS)
    vals = [base + (1 if i < rem else 0) for i in range(N_PARTICIPANTS)]
    vals = _paired_spread(vals, 5)
    assert sum(vals) == total_u and all(0 <= v <= 40 for v in vals)
    return vals


def sus_items_from_u(u: int, rot: int) -> list[int]:
    """A 10-item response whose summed contributions equal u (score = 2.5u)."""
    base, rem = divmod(u, 10)
    contrib = [base] * 10
    for j in range(rem):
        contrib[(j + rot) % 10] += 1
    items = []
    for j, c in enumerate(contrib):
        items.append(c + 1 if j % 2 == 0 else 5 - c)
    assert abs(score_sus(items) - 2.5 * u) < 1e-9
    return items


def _tlx_sums(total: int) -> list[int]:
    base, rem = divmod(total, N_PARTICIPANTS)
    vals = [base + (1 if i < rem else 0) for i in range(N_PARTICIPANTS)]
    vals = _paired_spread(vals, 4)
    assert sum(vals) == total and all(6 <= v <= 120 for v in vals)
    return vals


def tlx_items_from_sum(s: int, rot: int) -> list[int]:
    base, rem = divmod(s, 6)
    items = [base] * 6
    for j in range(rem):
        items[(j + rot) % 6] += 1
    assert sum(items) == s and all(1 <= v <= 20 for v in items)
    return items


# Questionnaire calibration: per-method totals chosen so the means sit within
# response granularity of 73.1 / 74.4 (SUS) and 7.0 / 5.1 (raw TLX).
CONV_SUS_TOTAL_U = 994    # mean score 73.088
AR_SUS_TOTAL_U = 1012     # mean score 74.412
CONV_TLX_TOTAL = 1428     # mean 7.000
AR_TLX_TOTAL = 1040       # mean 5.098


# --- synthetic session logs --------------------------------------------------


class _LogBuilder:
    def __init__(self, duration_s: int):
        self.events: list[SessionEvent] = []
        self.duration_ms = duration_s * 1000
        self._ts = 0

    def emit(self, kind: EventKind, payload: dict) -> None:
        self._ts += 1
        self.events.append(SessionEvent(self._ts, kind, payload))

    def finish(self) -> list[SessionEvent]:
        """Re-space all interior timestamps evenly across the duration."""
        n = len(self.events)
        assert n >= 2 and self.duration_ms > n
        spaced = []
        for i, ev in enumerate(self.events):
            ts = round(i * self.duration_ms / (n - 1))
            spaced.append(SessionEvent(max(ts, i), ev.kind, ev.payload))
        return spaced


def _synth_ar_log(session_id: str, scenario: Scenario, duration_s: int
                  ) -> list[SessionEvent]:
    b = _LogBuilder(duration_s)
    b.emit(EventKind.SESSION_START, {
        "session_id": session_id, "method": Method.AR_GUIDED.value,
        "scenario_id": scenario.scenario_id, "n_steps": len(scenario),
    })
    for i, step in enumerate(scenario.steps):
        b.emit(EventKind.GUIDANCE_SHOWN, {
            "display": "arrow", "step_index": i, "part_id": step.part_id,
            "site_id": step.site_id, "target_cnm": step.target_cnm})
        b.emit(EventKind.ENGAGE, {"part_id": step.part_id, "site_id": step.site_id,
                                  "tip_distance_mm": 2.0})
        b.emit(EventKind.TARGET_PUSHED, {
            "step_index": i, "part_id": step.part_id, "site_id": step.site_id,
            "target_cnm": step.target_cnm, "seq": i + 1})
        b.emit(EventKind.REACHED, {"target_cnm": step.target_cnm,
                                   "peak_cnm": step.target_cnm})
        b.emit(EventKind.STEP_VALIDATED, {
            "step_index": i, "part_id": step.part_id, "site_id": step.site_id,
            "target_cnm": step.target_cnm, "peak_cnm": step.target_cnm})
        b.emit(EventKind.GUIDANCE_SHOWN, {
            "display": "done", "step_index": i, "part_id": step.part_id,
            "site_id": step.site_id})
        b.emit(EventKind.TORQUE_APPLIED, {
            "part_id": step.part_id, "site_id": step.site_id,
            "target_cnm": step.target_cnm, "peak_cnm": step.target_cnm,
            "reached": True})
        b.emit(EventKind.DISENGAGE, {"part_id": step.part_id, "site_id": step.site_id})
    b.emit(EventKind.SESSION_END, {"duration_s": float(duration_s)})
    return b.finish()


def _synth_conventional_log(session_id: str, scenario: Scenario, scene: Scene,
                            duration_s: int, flags: ErrorFlags, p: int
                            ) -> tuple[list[SessionEvent], list[dict]]:
    n = len(scenario.steps)
    executed = list(scenario.steps)
    swap_at = None
    if flags.wrong_order:
        swap_at = p % (n - 1)
        executed[swap_at], executed[swap_at + 1] = executed[swap_at + 1], executed[swap_at]

    screw_row = None
    substitute = None
    if flags.wrong_screw:
        blocked = {swap_at, swap_at + 1} if swap_at is not None else set()
        candidates = [i for i in range(n) if i not in blocked]
        screw_row = candidates[(p * 7) % len(candidates)]
        substitute = nearest_off_scenario_site(scene, scenario, executed[screw_row])

    stale_row = None
    if flags.stale_torque:
        transitions = [k for k in range(1, n)
                       if executed[k].target_cnm != executed[k - 1].target_cnm
                       and k != screw_row]
        stale_row = transitions[p % len(transitions)]

    b = _LogBuilder(duration_s)
    b.emit(EventKind.SESSION_START, {
        "session_id": session_id, "method": Method.CONVENTIONAL.value,
        "scenario_id": scenario.scenario_id, "n_steps": n,
    })
    set_target: int | None = None
    for k, step in enumerate(executed):
        if k != stale_row and set_target != step.target_cnm:
            set_target = step.target_cnm
            b.emit(EventKind.MANUAL_SET, {"target_cnm": set_target, "sent": True})
        site = substitute if k == screw_row else step.site_key
        b.emit(EventKind.ENGAGE, {"part_id": site[0], "site_id": site[1],
                                  "tip_distance_mm": 2.5})
        b.emit(EventKind.REACHED, {"target_cnm": set_target, "peak_cnm": set_target})
        b.emit(EventKind.TORQUE_APPLIED, {
            "part_id": site[0], "site_id": site[1], "target_cnm": set_target,
            "peak_cnm": set_target, "reached": True})
        b.emit(EventKind.DISENGAGE, {"part_id": site[0], "site_id": site[1]})
        b.emit(EventKind.MANUAL_LOG_ENTRY, {
            "part_id": step.part_id, "site_id": step.site_id,
            "torque_cnm": step.target_cnm})
    b.emit(EventKind.SESSION_END, {"duration_s": float(duration_s)})
    events = b.finish()
    manual = [e.payload for e in events if e.kind == EventKind.MANUAL_LOG_ENTRY]
    return events, manual


def _report_from_log(session_id: str, method: Method, scenario: Scenario,
                     events: list[SessionEvent], duration_s: int) -> TighteningReport:
    episodes = [(e.payload, e.ts_ms) for e in events
                if e.kind == EventKind.TORQUE_APPLIED]
    rows = []
    for step in scenario.steps:
        eps = [(p, ts) for p, ts in episodes
               if (p["part_id"], p["site_id"]) == step.site_key]
        peak = max((p["peak_cnm"] for p, _ in eps), default=0)
        validated = any(p["reached"] and p["peak_cnm"] >= step.target_cnm
                        for p, _ in eps)
        ts = max((ts for _, ts in eps), default=0)
        rows.append(ReportRow(step.part_id, step.site_id, step.target_cnm,
                              peak, validated, ts))
    return TighteningReport(session_id, method, tuple(rows), float(duration_s))


def build_calibrated_study(out_dir) -> Path:
    """Write the full 68-session calibrated bundle; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = build_bench_scene()

    ar_times = ar_times_s()
    conv_times = conventional_times_s()
    sus_u = {Method.AR_GUIDED: _sus_u_values(AR_SUS_TOTAL_U),
             Method.CONVENTIONAL: _sus_u_values(CONV_SUS_TOTAL_U)}
    tlx_sums = {Method.AR_GUIDED: _tlx_sums(AR_TLX_TOTAL),
                Method.CONVENTIONAL: _tlx_sums(CONV_TLX_TOTAL)}

    for p in range(N_PARTICIPANTS):
        scenario = scene.scenarios[p % len(scene.scenarios)]
        for method in (Method.CONVENTIONAL, Method.AR_GUIDED):
            tag = "conv" if method == Method.CONVENTIONAL else "ar"
            session_id = f"p{p:02d}-{tag}"
            d = out_dir / session_id
            d.mkdir(exist_ok=True)
            if method == Method.AR_GUIDED:
                duration = ar_times[p]
                events = _synth_ar_log(session_id, scenario, duration)
                manual: list[dict] = []
                intended = ErrorFlags()
            else:
                duration = conv_times[p]
                intended = _conventional_flags(p)
                events, manual = _synth_conventional_log(
                    session_id, scenario, scene, duration, intended, p)
            got = classify_errors(events, manual, scenario)
            if got != intended:
                raise AssertionError(
                    f"{session_id}: classifier saw {got}, intended {intended}")
            write_event_log(events, d / "events.jsonl")
            write_report(_report_from_log(session_id, method, scenario, events,
                                          duration), d / "report.csv")
            q = {
                "participant": f"p{p:02d}",
                "method": method.value,
                "sus_items": sus_items_from_u(sus_u[method][p], rot=p % 10),
                "tlx_items": tlx_items_from_sum(tlx_sums[method][p], rot=p % 6),
            }
            (d / "questionnaire.json").write_text(
                json.dumps(q, indent=2) + "\n", encoding="utf-8")
    return out_dir


def calibrated_study_path() -> Path:
    return Path(__file__).parent / "data" / "study_calibrated"
