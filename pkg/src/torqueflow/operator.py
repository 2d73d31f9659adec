"""Scripted operators that drive headless sessions.

Three behaviors: a guided follower that obeys the arrows, a conventional
operator working from the instruction sheet with configurable fault
injection, and an adversarial operator that does random things as fast as it
can (used to property-test sequence enforcement).

Fault types mirror the conventional-method error taxonomy: executing the
sheet in a wrong order, physically tightening a neighboring off-sheet hole
while logging the intended one, and forgetting to reprogram the torque at a
level transition. Each is an independent per-session Bernoulli draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from random import Random

from .geometry import Pose, Vec3
from .scene import Scenario, ScenarioStep, Scene
from .session import Session
from .wrench import WrenchMode, WrenchState


@dataclass(frozen=True)
class OperatorProfile:
    p_wrong_order: float = 0.0
    p_wrong_screw: float = 0.0
    p_stale_torque: float = 0.0
    motion_speed: float = 150.0      # mm/s hand speed
    release_early_prob: float = 0.0  # chance per screw of an interrupted pull
    reapply_prob: float = 0.0        # chance per screw of a reflex re-pull after reach
    pace: float = 1.0                # scales reading/writing/settling pauses

    def __post_init__(self):
        for name in ("p_wrong_order", "p_wrong_screw", "p_stale_torque",
                     "release_early_prob", "reapply_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.motion_speed <= 0 or self.pace <= 0:
            raise ValueError("motion_speed and pace must be positive")


PERFECT_PROFILE = OperatorProfile()
# Error incidences matching the observed conventional-method rates.
PAPER_RATE_PROFILE = OperatorProfile(0.47, 0.29, 0.09,
                                     release_early_prob=0.10, reapply_prob=0.15)


def profile_from_json(obj: dict) -> OperatorProfile:
    return OperatorProfile(**obj)


@dataclass(frozen=True)
class FaultPlan:
    """Materialized per-session error draws (executed-row positions)."""

    swap_at: int | None = None          # executed rows swap_at/swap_at+1 are transposed
    screw_row: int | None = None
    screw_substitute: tuple[str, str] | None = None
    stale_row: int | None = None

    @property
    def wrong_order(self) -> bool:
        return self.swap_at is not None

    @property
    def wrong_screw(self) -> bool:
        return self.screw_row is not None

    @property
    def stale_torque(self) -> bool:
        return self.stale_row is not None

    @property
    def any(self) -> bool:
        return self.wrong_order or self.wrong_screw or self.stale_torque


def nearest_off_scenario_site(scene: Scene, scenario: Scenario,
                               step: ScenarioStep) -> tuple[str, str]:
    """The hole an operator would mistake for the intended one: the closest
    site on the same part that the sheet does not mention."""
    part = scene.part(step.part_id)
    intended = part.site(step.site_id).head_point
    used = scenario.site_keys
    best = None
    best_d = math.inf
    for s in part.sites:
        key = (part.part_id, s.site_id)
        if key in used:
            continue
        d = sum((a - b) ** 2 for a, b in zip(s.head_point, intended))
        if d < best_d:
            best, best_d = key, d
    if best is None:
        raise ValueError(
            f"part {step.part_id!r} has no off-scenario site to misidentify"
        )
    return best


def draw_fault_plan(profile: OperatorProfile, scenario: Scenario, scene: Scene,
                    rng: Random) -> FaultPlan:
    """Independent Bernoulli draw per error type, then concrete placements."""
    n = len(scenario.steps)
    want_order = rng.random() < profile.p_wrong_order
    want_screw = rng.random() < profile.p_wrong_screw
    want_stale = rng.random() < profile.p_stale_torque

    swap_at = None
    if want_order:
        if n < 2:
            raise ValueError("wrong-order fault needs at least two steps")
        swap_at = rng.randrange(n - 1)

    executed = list(scenario.steps)
    if swap_at is not None:
        executed[swap_at], executed[swap_at + 1] = executed[swap_at + 1], executed[swap_at]

    screw_row = None
    substitute = None
    if want_screw:
        swap_rows = {swap_at, swap_at + 1} if swap_at is not None else set()
        candidates = [i for i in range(n) if i not in swap_rows] or list(range(n))
        screw_row = candidates[rng.randrange(len(candidates))]
        substitute = nearest_off_scenario_site(scene, scenario, executed[screw_row])

    stale_row = None
    if want_stale:
        transitions = [
            k for k in range(1, n)
            if executed[k].target_cnm != executed[k - 1].target_cnm and k != screw_row
        ]
        if not transitions:
            raise ValueError(
                f"scenario {scenario.scenario_id!r} has no torque transition "
                "to forget"
            )
        stale_row = transitions[rng.randrange(len(transitions))]

    return FaultPlan(swap_at, screw_row, substitute, stale_row)


# --- motion + state machine helpers -----------------------------------------


class _Hand:
    """Moves the bit tip through space at a bounded speed; the wrench body
    rides above it with identity rotation."""

    def __init__(self, scene: Scene, speed: float, start_tip: Vec3):
        ox, oy, oz = scene.tool.bit_tip_offset.translation
        self._offset = (ox, oy, oz)
        self.speed = speed
        self.tip = start_tip
        self.waypoint: Vec3 = start_tip

    def move(self, dt: float) -> bool:
        """Advance toward the waypoint; True when it has been reached."""
        dx = self.waypoint[0] - self.tip[0]
        dy = self.waypoint[1] - self.tip[1]
        dz = self.waypoint[2] - self.tip[2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist < 1e-9:
            return True
        step = self.speed * dt
        if step >= dist:
            self.tip = self.waypoint
            return True
        f = step / dist
        self.tip = (self.tip[0] + dx * f, self.tip[1] + dy * f, self.tip[2] + dz * f)
        return False

    def body_pose(self) -> Pose:
        ox, oy, oz = self._offset
        return Pose((self.tip[0] - ox, self.tip[1] - oy, self.tip[2] - oz))


HOME_TIP: Vec3 = (-80.0, -80.0, 0.0)


@dataclass
class OperatorOutput:
    pose: Pose
    effort: bool
    commands: list[dict] = field(default_factory=list)


class Operator:
    """Per-tick driver; reads the session and the physical wrench state
    (LED / mode), returns the true wrench pose, hand effort and commands."""

    def tick(self, ts_ms: int, dt: float, session: Session,
             wrench: WrenchState) -> OperatorOutput:
        raise NotImplementedError


class GuidedFollower(Operator):
    """Follows the arrows: approach the indicated site, pull until the reach
    alert, wait for the validation marker, move on. Retries by re-engaging
    when a reach was not validated (e.g. tracking drifted at the instant)."""

    PRESS_TIMEOUT_MS = 3000
    CONFIRM_TIMEOUT_MS = 700

    def __init__(self, profile: OperatorProfile, scenario: Scenario, scene: Scene,
                 rng: Random):
        self.profile = profile
        self.scenario = scenario
        self.scene = scene
        self.rng = rng
        self.hand = _Hand(scene, profile.motion_speed, HOME_TIP)
        self.state = "goto"
        self.my_step = 0
        self.until_ms = 0
        self.press_started_ms = 0
        self.early_release_at: int | None = None
        self.effort = False

    def _site_tip_target(self, step: ScenarioStep) -> Vec3:
        head = self.scene.world_head_point(step.part_id, step.site_id)
        # Land slightly off-center, inside a third of the engagement radius.
        r = self.rng.uniform(0.0, 4.0)
        ang = self.rng.uniform(0.0, 2.0 * math.pi)
        return (head[0] + r * math.cos(ang), head[1] + r * math.sin(ang), head[2])

    def tick(self, ts_ms, dt, session, wrench) -> OperatorOutput:
        if not session.active or self.my_step >= len(self.scenario.steps):
            self.effort = False
            return OperatorOutput(self.hand.body_pose(), False)
        if session.step_index > self.my_step:
            # Arrow moved on; let go of the trigger before walking off.
            self.my_step = session.step_index
            self.state = "goto"
            self.effort = False
        step = self.scenario.steps[min(self.my_step, len(self.scenario.steps) - 1)]

        if self.state == "goto":
            self.hand.waypoint = self._site_tip_target(step)
            self.state = "approach"
        if self.state == "approach":
            if self.hand.move(dt):
                self.state = "settle"
                self.until_ms = ts_ms + int(150 * self.profile.pace)
        elif self.state == "settle":
            if ts_ms >= self.until_ms:
                eng = session.engagement
                if eng.engaged_site == step.site_key:
                    self.state = "press"
                    self.effort = True
                    self.press_started_ms = ts_ms
                    self.early_release_at = None
                    if self.rng.random() < self.profile.release_early_prob:
                        self.early_release_at = int(
                            step.target_cnm * self.rng.uniform(0.4, 0.8))
                elif not eng.tracking_ok:
                    pass  # wait out the tracking loss
                else:
                    self.hand.waypoint = self._site_tip_target(step)
                    self.state = "approach"
        elif self.state == "press":
            if self.early_release_at is not None \
                    and wrench.applied_cnm >= self.early_release_at:
                self.effort = False
                self.early_release_at = None
                self.state = "repress_wait"
                self.until_ms = ts_ms + int(250 * self.profile.pace)
            elif wrench.mode == WrenchMode.REACHED:
                self.effort = False
                self.state = "release"
            elif ts_ms - self.press_started_ms > self.PRESS_TIMEOUT_MS:
                self.effort = False
                self.state = "settle"
                self.until_ms = ts_ms + int(150 * self.profile.pace)
        elif self.state == "repress_wait":
            if ts_ms >= self.until_ms:
                self.state = "press"
                self.effort = True
                self.press_started_ms = ts_ms
        elif self.state == "release":
            if wrench.applied_cnm == 0:
                self.state = "confirm"
                self.until_ms = ts_ms + self.CONFIRM_TIMEOUT_MS
        elif self.state == "confirm":
            if session.step_index > self.my_step:
                self.my_step = session.step_index
                self.state = "goto"
            elif ts_ms >= self.until_ms:
                # Reach did not validate; back off beyond the engagement
                # radius and re-approach so the target is pushed again.
                head = self.scene.world_head_point(step.part_id, step.site_id)
                off = 2.5 * session.engage_cfg.engage_threshold
                self.hand.waypoint = (head[0] + off, head[1], head[2])
                self.state = "retreat"
        elif self.state == "retreat":
            if self.hand.move(dt):
                self.state = "goto"

        return OperatorOutput(self.hand.body_pose(), self.effort)


@dataclass
class _PlannedRow:
    step: ScenarioStep                  # the instruction row being executed
    actual_site: tuple[str, str]        # where the wrench really goes
    do_set: bool
    early_release_at: int | None
    reapply: bool


class ConventionalOperator(Operator):
    """Works from the instruction sheet: set the torque in the app, tighten,
    write the log entry. Fault injection happens in the precomputed plan."""

    def __init__(self, profile: OperatorProfile, scenario: Scenario, scene: Scene,
                 rng: Random, fault_plan: FaultPlan | None = None):
        self.profile = profile
        self.scenario = scenario
        self.scene = scene
        self.rng = rng
        self.plan = fault_plan if fault_plan is not None \
            else draw_fault_plan(profile, scenario, scene, rng)
        self.rows = self._build_rows()
        self.hand = _Hand(scene, profile.motion_speed, HOME_TIP)
        self.row_idx = 0
        self.state = "read"
        self.until_ms = 0
        self.effort = False
        self.did_reapply = False

    def _build_rows(self) -> list[_PlannedRow]:
        executed = list(self.scenario.steps)
        if self.plan.swap_at is not None:
            i = self.plan.swap_at
            executed[i], executed[i + 1] = executed[i + 1], executed[i]
        rows = []
        believed: int | None = None
        for k, step in enumerate(executed):
            if k == self.plan.stale_row:
                do_set = False  # forgot to reprogram at the transition
            else:
                do_set = believed != step.target_cnm
            believed = step.target_cnm
            actual = (self.plan.screw_substitute
                      if k == self.plan.screw_row else step.site_key)
            early = None
            if self.rng.random() < self.profile.release_early_prob:
                early = int(step.target_cnm * self.rng.uniform(0.4, 0.8))
            reapply = self.rng.random() < self.profile.reapply_prob
            rows.append(_PlannedRow(step, actual, do_set, early, reapply))
        return rows

    def _tip_target(self, site_key: tuple[str, str]) -> Vec3:
        head = self.scene.world_head_point(*site_key)
        r = self.rng.uniform(0.0, 4.0)
        ang = self.rng.uniform(0.0, 2.0 * math.pi)
        return (head[0] + r * math.cos(ang), head[1] + r * math.sin(ang), head[2])

    def tick(self, ts_ms, dt, session, wrench) -> OperatorOutput:
        if not session.active or self.row_idx >= len(self.rows):
            self.effort = False
            return OperatorOutput(self.hand.body_pose(), False)
        row = self.rows[self.row_idx]
        cmds: list[dict] = []

        if self.state == "read":
            # Reading the sheet; longer on the first row of each part.
            first_of_part = self.row_idx == 0 or (
                self.rows[self.row_idx - 1].step.part_id != row.step.part_id)
            pause = 1200 if first_of_part else 350
            self.until_ms = ts_ms + int(pause * self.profile.pace)
            self.state = "read_wait"
        elif self.state == "read_wait":
            if ts_ms >= self.until_ms:
                if row.do_set:
                    cmds.append({"cmd": "manual_set",
                                 "target_cnm": row.step.target_cnm})
                    self.until_ms = ts_ms + int(400 * self.profile.pace)
                    self.state = "set_wait"
                else:
                    self.state = "move"
                    self.hand.waypoint = self._tip_target(row.actual_site)
        elif self.state == "set_wait":
            if ts_ms >= self.until_ms:
                self.state = "move"
                self.hand.waypoint = self._tip_target(row.actual_site)
        elif self.state == "move":
            if self.hand.move(dt):
                self.state = "settle"
                self.until_ms = ts_ms + int(150 * self.profile.pace)
        elif self.state == "settle":
            if ts_ms >= self.until_ms:
                self.state = "press"
                self.effort = True
                self.did_reapply = False
        elif self.state == "press":
            if row.early_release_at is not None \
                    and wrench.applied_cnm >= row.early_release_at:
                row.early_release_at = None
                self.effort = False
                self.state = "repress_wait"
                self.until_ms = ts_ms + int(250 * self.profile.pace)
            elif wrench.mode == WrenchMode.REACHED:
                self.effort = False
                self.state = "release"
        elif self.state == "repress_wait":
            if ts_ms >= self.until_ms:
                self.state = "press"
                self.effort = True
        elif self.state == "release":
            if wrench.applied_cnm == 0:
                if row.reapply and not self.did_reapply:
                    self.did_reapply = True
                    self.state = "press"
                    self.effort = True
                else:
                    self.state = "log"
                    self.until_ms = ts_ms + int(1100 * self.profile.pace)
        elif self.state == "log":
            if ts_ms >= self.until_ms:
                # The sheet's row is what gets written down, whatever the
                # hand actually did.
                cmds.append({"cmd": "manual_log",
                             "part_id": row.step.part_id,
                             "site_id": row.step.site_id,
                             "torque_cnm": row.step.target_cnm})
                self.row_idx += 1
                if self.row_idx >= len(self.rows):
                    cmds.append({"cmd": "done"})
                else:
                    self.state = "read"

        return OperatorOutput(self.hand.body_pose(), self.effort, cmds)


class AdversarialOperator(Operator):
    """Moves anywhere, pulls any time, spams commands. Exists to hunt for
    orderings that would validate a step out of sequence."""

    def __init__(self, profile: OperatorProfile, scenario: Scenario, scene: Scene,
                 rng: Random):
        self.scenario = scenario
        self.scene = scene
        self.rng = rng
        speed = max(profile.motion_speed, 400.0)
        self.hand = _Hand(scene, speed, HOME_TIP)
        pts = [scene.world_head_point(p.part_id, s.site_id)
               for p in scene.parts for s in p.sites]
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        self._bounds = (min(xs) - 60, max(xs) + 60, min(ys) - 60, max(ys) + 60)
        self._sites = [(p.part_id, s.site_id) for p in scene.parts for s in p.sites]
        self.effort = False
        self._next_decision_ms = 0

    def tick(self, ts_ms, dt, session, wrench) -> OperatorOutput:
        cmds: list[dict] = []
        if ts_ms >= self._next_decision_ms:
            self._next_decision_ms = ts_ms + self.rng.randrange(100, 900)
            roll = self.rng.random()
            if roll < 0.45:
                # Mostly hover over real sites so pulls actually bite.
                key = self._sites[self.rng.randrange(len(self._sites))]
                head = self.scene.world_head_point(*key)
                jx = self.rng.uniform(-6.0, 6.0)
                jy = self.rng.uniform(-6.0, 6.0)
                self.hand.waypoint = (head[0] + jx, head[1] + jy, head[2])
            elif roll < 0.60:
                x0, x1, y0, y1 = self._bounds
                self.hand.waypoint = (self.rng.uniform(x0, x1),
                                      self.rng.uniform(y0, y1), 0.0)
            elif roll < 0.85:
                self.effort = not self.effort
            elif roll < 0.95:
                cmds.append({"cmd": "manual_set",
                             "target_cnm": self.rng.randrange(50, 1300)})
            else:
                cmds.append({"cmd": "manual_log",
                             "part_id": "grid", "site_id": "r0c0",
                             "torque_cnm": self.rng.randrange(100, 1000)})
        self.hand.move(dt)
        return OperatorOutput(self.hand.body_pose(), self.effort, cmds)
