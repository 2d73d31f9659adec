"""Headless session execution: wires a scripted operator, the tracking
simulator, a loopback-linked wrench device and the session engine into one
deterministic fixed-step loop.

Every source of randomness is an independent child stream derived from the
master seed, so a (scenario, seed, profile) triple always reproduces the same
event log byte for byte. Nothing here touches the network.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from random import Random

from .operator import (
    AdversarialOperator,
    ConventionalOperator,
    GuidedFollower,
    Operator,
    OperatorProfile,
    PAPER_RATE_PROFILE,
    PERFECT_PROFILE,
)
from .scene import Scenario, Scene
from .session import (
    Method,
    Session,
    TighteningReport,
    events_to_bytes,
    guidance_stream,
    guidance_to_bytes,
    write_event_log,
)
from .report import write_report
from .tracking import TrackingConfig, TrackingSimulator
from .wrench import LoopbackLink, RampConfig, SimulatedWrench

DEFAULT_DT_MS = 20
DEFAULT_MAX_S = 600.0

PROFILES = {
    "perfect": PERFECT_PROFILE,
    "paper-rates": PAPER_RATE_PROFILE,
    "adversarial": "adversarial",
}


def child_seed(master: int, *labels) -> int:
    """Stable child seed; independent of interpreter hash randomization."""
    text = ":".join([str(master), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def resolve_profile(spec) -> OperatorProfile | str:
    if isinstance(spec, OperatorProfile):
        return spec
    if isinstance(spec, str):
        if spec not in PROFILES:
            raise ValueError(f"unknown profile {spec!r} "
                             f"(expected one of {sorted(PROFILES)})")
        return PROFILES[spec]
    if isinstance(spec, dict):
        return OperatorProfile(**spec)
    raise ValueError(f"cannot interpret profile spec {spec!r}")


def make_operator(profile, method: Method, scenario: Scenario, scene: Scene,
                  rng: Random) -> Operator:
    if profile == "adversarial":
        return AdversarialOperator(OperatorProfile(), scenario, scene, rng)
    if method == Method.AR_GUIDED:
        return GuidedFollower(profile, scenario, scene, rng)
    return ConventionalOperator(profile, scenario, scene, rng)


@dataclass
class SessionResult:
    session: Session
    report: TighteningReport
    manual_log: list[dict]

    @property
    def events(self):
        return self.session.events

    @property
    def aborted(self) -> bool:
        return self.session.aborted


def run_session(
    *,
    scene: Scene,
    scenario: Scenario,
    method: Method,
    profile="perfect",
    seed: int = 0,
    session_index: int = 0,
    session_id: str | None = None,
    tracking_cfg: TrackingConfig | None = None,
    ramp_cfg: RampConfig | None = None,
    dt_ms: int = DEFAULT_DT_MS,
    max_s: float = DEFAULT_MAX_S,
    operator: Operator | None = None,
) -> SessionResult:
    """Run one headless session to completion (or the time cap)."""
    tracking_cfg = tracking_cfg or TrackingConfig()
    ramp_cfg = ramp_cfg or RampConfig()
    profile = resolve_profile(profile)
    if session_id is None:
        session_id = f"{method.value.lower()}-{session_index:03d}"

    device = SimulatedWrench(ramp_cfg, Random(child_seed(seed, session_index, "device")))
    link = LoopbackLink(device)
    if method == Method.AR_GUIDED:
        sim_cfg = tracking_cfg
    else:
        # No camera tracking in the conventional method: the true pose is
        # observed directly (engagement thresholds still apply).
        sim_cfg = dataclasses.replace(tracking_cfg, drift_rate=0.0, loss_rate=0.0)
    tracking = TrackingSimulator(sim_cfg, Random(child_seed(seed, session_index, "tracking")))
    if operator is None:
        operator = make_operator(profile, method, scenario, scene,
                                 Random(child_seed(seed, session_index, "operator")))

    config_note = {
        "seed": seed,
        "session_index": session_index,
        "dt_ms": dt_ms,
        "profile": ("adversarial" if profile == "adversarial"
                    else dataclasses.asdict(profile)),
    }
    session = Session(scenario=scenario, scene=scene, link=link, method=method,
                      session_id=session_id, engage_cfg=tracking_cfg,
                      config_note=config_note)

    dt = dt_ms / 1000.0
    t_ms = 0
    max_ms = int(max_s * 1000)
    while session.active and t_ms < max_ms:
        t_ms += dt_ms
        out = operator.tick(t_ms, dt, session, device.state)
        tev = tracking.step(dt)
        reported = tracking.observe(out.pose)
        link.deliver(device.step(out.effort, dt))
        session.on_tick(t_ms, reported, tev)
        for cmd in out.commands:
            session.on_operator_command(t_ms, cmd)
    if session.active:
        session.abort(t_ms, "time limit reached")

    return SessionResult(session, session.report(), session.manual_log())


def run_ar_session(scene, scenario, **kwargs) -> SessionResult:
    return run_session(scene=scene, scenario=scenario, method=Method.AR_GUIDED, **kwargs)


def run_conventional_session(scene, scenario, **kwargs) -> SessionResult:
    return run_session(scene=scene, scenario=scenario,
                       method=Method.CONVENTIONAL, **kwargs)


def drive(profile, scenario: Scenario, scene: Scene, *, method: Method,
          rng_seed: int, **kwargs) -> SessionResult:
    """Run one profiled operator through a fresh session."""
    return run_session(scene=scene, scenario=scenario, method=method,
                       profile=profile, seed=rng_seed, **kwargs)


def write_session_artifacts(result: SessionResult, out_dir) -> dict[str, Path]:
    """Write events.jsonl, report.csv and guidance.jsonl for one session."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": out_dir / "events.jsonl",
        "report": out_dir / "report.csv",
        "guidance": out_dir / "guidance.jsonl",
    }
    write_event_log(result.events, paths["events"])
    write_report(result.report, paths["report"])
    paths["guidance"].write_bytes(guidance_to_bytes(guidance_stream(result.events)))
    return paths


def events_bytes(result: SessionResult) -> bytes:
    return events_to_bytes(result.events)
