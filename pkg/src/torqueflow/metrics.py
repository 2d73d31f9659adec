"""Error classification, questionnaire scoring and study aggregation.

Errors are per-session booleans (each type counts once per session, however
often it recurs). Classification works from the event log alone:

  wrong_order   a scenario site completed before an earlier-in-sequence
                site's first completion (among sites that completed at all)
  wrong_screw   a completed torque episode landed on a hole the scenario
                does not mention, or the written log disagrees with what was
                actually tightened
  stale_torque  an episode ran with the wrench programmed to something other
                than the engaged site's scenario target

"Completed" means the episode reached its programmed torque. In the guided
method completions are the validated steps, which the orchestrator only ever
grants in sequence on the correct site, so order/screw flags are false there
by construction.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path

from .scene import Scenario, Scene
from .session import EventKind, Method, SessionEvent, read_event_log


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorFlags:
    wrong_order: bool = False
    wrong_screw: bool = False
    stale_torque: bool = False

    @property
    def any(self) -> bool:
        return self.wrong_order or self.wrong_screw or self.stale_torque


def _session_header(events: list[SessionEvent]) -> dict:
    if not events or events[0].kind != EventKind.SESSION_START:
        raise MetricsError("event log does not start with SESSION_START")
    return events[0].payload


def classify_errors(events: list[SessionEvent], manual_log: list[dict],
                    scenario: Scenario) -> ErrorFlags:
    """Flag the session's error types against its scenario."""
    header = _session_header(events)
    if header.get("scenario_id") != scenario.scenario_id:
        raise MetricsError(
            f"log is for scenario {header.get('scenario_id')!r}, "
            f"not {scenario.scenario_id!r}"
        )
    if events[-1].kind == EventKind.SESSION_ABORTED:
        raise MetricsError("aborted sessions are excluded from classification")
    method = Method(header["method"])

    order_index = {s.site_key: i for i, s in enumerate(scenario.steps)}
    targets = {s.site_key: s.target_cnm for s in scenario.steps}

    # Ordered first-completions per site, and all completed episodes.
    completions: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    stale = False
    off_scenario = False
    if method == Method.AR_GUIDED:
        for e in events:
            if e.kind == EventKind.STEP_VALIDATED:
                key = (e.payload["part_id"], e.payload["site_id"])
                if key not in seen:
                    seen.add(key)
                    completions.append(key)
    for e in events:
        if e.kind != EventKind.TORQUE_APPLIED:
            continue
        p = e.payload
        if p.get("part_id") is None:
            continue
        key = (p["part_id"], p["site_id"])
        scenario_target = targets.get(key)
        if scenario_target is not None and p.get("target_cnm") is not None \
                and p["target_cnm"] != scenario_target:
            stale = True
        if not p.get("reached"):
            continue
        if scenario_target is None:
            off_scenario = True
        elif method != Method.AR_GUIDED and key not in seen:
            seen.add(key)
            completions.append(key)

    wrong_order = False
    indices = [order_index[key] for key in completions]
    if any(b < a for a, b in zip(indices, indices[1:])):
        wrong_order = True

    wrong_screw = off_scenario
    if method != Method.AR_GUIDED and manual_log:
        logged = [(row["part_id"], row["site_id"]) for row in manual_log]
        actual_order: list[tuple[str, str]] = []
        seen2: set[tuple[str, str]] = set()
        for e in events:
            if e.kind == EventKind.TORQUE_APPLIED and e.payload.get("reached") \
                    and e.payload.get("part_id") is not None:
                key = (e.payload["part_id"], e.payload["site_id"])
                if key not in seen2:
                    seen2.add(key)
                    actual_order.append(key)
        for want, got in zip(logged, actual_order):
            if want != got:
                wrong_screw = True
                break

    if method == Method.AR_GUIDED:
        # Sequence enforcement makes order/localization errors structurally
        # impossible; completions here are validated steps, granted in order.
        wrong_order = False
        wrong_screw = False

    return ErrorFlags(wrong_order, wrong_screw, stale)


def manual_log_from_events(events: list[SessionEvent]) -> list[dict]:
    return [e.payload for e in events if e.kind == EventKind.MANUAL_LOG_ENTRY]


# --- questionnaires ----------------------------------------------------------

SUS_ITEMS = 10
TLX_ITEMS = 6
TLX_MIN, TLX_MAX = 1, 20


@dataclass(frozen=True)
class QuestionnaireResponse:
    sus_items: tuple[int, ...]
    tlx_items: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sus_items", tuple(int(v) for v in self.sus_items))
        object.__setattr__(self, "tlx_items", tuple(int(v) for v in self.tlx_items))
        _check_sus(self.sus_items)
        _check_tlx(self.tlx_items)


def _check_sus(items) -> None:
    if len(items) != SUS_ITEMS:
        raise MetricsError(f"SUS needs {SUS_ITEMS} items, got {len(items)}")
    for i, v in enumerate(items):
        if not (1 <= v <= 5):
            raise MetricsError(f"SUS item {i + 1} out of range 1..5: {v}")


def _check_tlx(items) -> None:
    if len(items) != TLX_ITEMS:
        raise MetricsError(f"TLX needs {TLX_ITEMS} items, got {len(items)}")
    for i, v in enumerate(items):
        if not (TLX_MIN <= v <= TLX_MAX):
            raise MetricsError(f"TLX item {i + 1} out of range 1..20: {v}")


def score_sus(items) -> float:
    """Standard 10-item usability score on 0..100.

    Odd-numbered items (1st, 3rd, ...) are positively worded and contribute
    (item - 1); even-numbered items are negative and contribute (5 - item).
    The summed contributions are scaled by 2.5.
    """
    items = [int(v) for v in items]
    _check_sus(items)
    total = 0
    for i, v in enumerate(items):
        total += (v - 1) if i % 2 == 0 else (5 - v)
    return total * 2.5


def score_tlx(items) -> float:
    """Raw (unweighted) task-load score: the mean of the six subscales, 1..20."""
    items = [int(v) for v in items]
    _check_tlx(items)
    return sum(items) / len(items)


def invert_tlx(raw: float) -> float:
    """Map raw 1..20 task load onto 0..100 with 1 (no workload) -> 100."""
    return 100.0 * (TLX_MAX - raw) / (TLX_MAX - TLX_MIN)


# --- aggregation ---------------------------------------------------------


@dataclass(frozen=True)
class MethodSummary:
    method: Method
    n_sessions: int
    n_with_errors: int
    mean_exec_time_s: float
    usability: float | None   # mean 0..100 score, when questionnaires exist
    task_load: float | None   # mean raw 1..20

    @property
    def reliability(self) -> float:
        return 100.0 * (self.n_sessions - self.n_with_errors) / self.n_sessions


def radar(summaries: dict[Method, MethodSummary],
          all_times_s) -> dict[str, dict[str, float | None]]:
    """Radar axes per method, each on 0..100.

    Efficiency shares one numerator: the single fastest session across both
    methods, divided by each method's mean time.
    """
    times = [float(t) for t in all_times_s]
    if not times:
        raise MetricsError("no session times to build radar from")
    global_min = min(times)
    out: dict[str, dict[str, float | None]] = {}
    for method, s in summaries.items():
        if s.n_sessions < 1:
            raise MetricsError(f"method {method.value} has no sessions")
        out[method.value.lower()] = {
            "usability": s.usability,
            "inverted_task_load": (None if s.task_load is None
                                   else invert_tlx(s.task_load)),
            "efficiency": 100.0 * global_min / s.mean_exec_time_s,
            "reliability": s.reliability,
        }
    return out


@dataclass
class SessionRecord:
    session_id: str
    method: Method
    duration_s: float
    flags: ErrorFlags
    questionnaire: QuestionnaireResponse | None


@dataclass
class StudyAggregate:
    summaries: dict[Method, MethodSummary]
    times: dict[Method, list[float]]
    records: list[SessionRecord]
    n_excluded: int

    def radar(self) -> dict[str, dict[str, float | None]]:
        all_times = [t for ts in self.times.values() for t in ts]
        return radar(self.summaries, all_times)


def load_questionnaire(path) -> QuestionnaireResponse:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return QuestionnaireResponse(obj["sus_items"], obj["tlx_items"])


def aggregate_study(bundle_dir, scene: Scene) -> StudyAggregate:
    """Aggregate a directory of session artifacts into per-method summaries.

    The bundle is one subdirectory per session, each holding events.jsonl and
    optionally questionnaire.json. Aborted sessions are excluded. The result
    is independent of directory enumeration order.
    """
    bundle_dir = Path(bundle_dir)
    session_dirs = sorted(d for d in bundle_dir.iterdir()
                          if d.is_dir() and (d / "events.jsonl").exists())
    if not session_dirs:
        raise MetricsError(f"no session directories under {bundle_dir}")

    records: list[SessionRecord] = []
    n_excluded = 0
    for d in session_dirs:
        events = read_event_log(d / "events.jsonl")
        header = _session_header(events)
        if events[-1].kind == EventKind.SESSION_ABORTED:
            n_excluded += 1
            continue
        method = Method(header["method"])
        scenario = scene.scenario(header["scenario_id"])
        flags = classify_errors(events, manual_log_from_events(events), scenario)
        duration = float(events[-1].payload["duration_s"])
        q_path = d / "questionnaire.json"
        questionnaire = load_questionnaire(q_path) if q_path.exists() else None
        records.append(SessionRecord(header["session_id"], method, duration,
                                     flags, questionnaire))

    summaries: dict[Method, MethodSummary] = {}
    times: dict[Method, list[float]] = {}
    for method in (Method.CONVENTIONAL, Method.AR_GUIDED):
        recs = [r for r in records if r.method == method]
        if not recs:
            continue
        sus_scores = [score_sus(r.questionnaire.sus_items)
                      for r in recs if r.questionnaire is not None]
        tlx_scores = [score_tlx(r.questionnaire.tlx_items)
                      for r in recs if r.questionnaire is not None]
        times[method] = [r.duration_s for r in recs]
        summaries[method] = MethodSummary(
            method=method,
            n_sessions=len(recs),
            n_with_errors=sum(1 for r in recs if r.flags.any),
            mean_exec_time_s=statistics.fmean(times[method]),
            usability=statistics.fmean(sus_scores) if sus_scores else None,
            task_load=statistics.fmean(tlx_scores) if tlx_scores else None,
        )
    if not summaries:
        raise MetricsError(f"no completed sessions under {bundle_dir}")
    return StudyAggregate(summaries, times, records, n_excluded)


# --- table / radar emission -----------------------------------------------

TABLE_METRICS = ("usability_sus", "task_load_tlx", "execution_time_s",
                 "n_with_errors", "n_sessions")


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def table1_csv(agg: StudyAggregate) -> str:
    """Per-method results table, one metric per row."""
    methods = [m for m in (Method.CONVENTIONAL, Method.AR_GUIDED) if m in agg.summaries]
    lines = ["metric," + ",".join(m.value.lower() for m in methods)]
    values = {
        "usability_sus": lambda s: s.usability,
        "task_load_tlx": lambda s: s.task_load,
        "execution_time_s": lambda s: s.mean_exec_time_s,
        "n_with_errors": lambda s: s.n_with_errors,
        "n_sessions": lambda s: s.n_sessions,
    }
    for metric in TABLE_METRICS:
        row = [metric] + [_fmt(values[metric](agg.summaries[m])) for m in methods]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def radar_json(agg: StudyAggregate) -> str:
    return json.dumps(agg.radar(), indent=2, sort_keys=True) + "\n"


RADAR_AXES = ("usability", "inverted_task_load", "efficiency", "reliability")


def plot_radar(agg: StudyAggregate, path) -> None:
    """Render the per-method radar to an image file."""
    import math

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    axes_values = agg.radar()
    angles = [math.pi / 2 - 2 * math.pi * i / len(RADAR_AXES)
              for i in range(len(RADAR_AXES))]
    angles.append(angles[0])
    fig, ax = plt.subplots(subplot_kw={"projection": "polar"}, figsize=(6, 6))
    for method, scores in axes_values.items():
        values = [scores[a] if scores[a] is not None else 0.0 for a in RADAR_AXES]
        values.append(values[0])
        ax.plot(angles, values, label=method)
        ax.fill(angles, values, alpha=0.2)
    ax.set_xticks(angles[:-1])
    ax.set_xticklabels([a.replace("_", " ") for a in RADAR_AXES])
    ax.set_ylim(0, 100)
    ax.legend(loc="lower right", bbox_to_anchor=(1.1, -0.1))
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
