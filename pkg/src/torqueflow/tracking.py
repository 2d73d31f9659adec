"""Wrench-tip kinematics, the distance-based engagement test, and a simulated
6-DoF tracking source with drift, loss and automatic re-detection.

The engagement rule: the bit tip must be within `engage_threshold` mm of a
bolt head, with an unambiguous nearest candidate. No engagement is ever
reported while tracking is lost; a wrong guess here would push a wrong torque
to the wrench, so ties are refused rather than broken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from random import Random

import numpy as np

from .geometry import Pose, Vec3, quat_rotate
from .scene import Part, ToolModel


@dataclass(frozen=True)
class TrackingConfig:
    drift_rate: float = 1.0        # mm / sqrt(s), random-walk scale on the reported position
    loss_rate: float = 0.02        # tracking losses per second (Poisson)
    redetect_delay: float = 1.0    # seconds until automatic re-detection
    engage_threshold: float = 15.0  # mm, tip-to-head distance that counts as engaged
    ambiguity_epsilon: float = 1.0  # mm, refuse engagement when two sites are this close
    axis_max_deg: float | None = None  # optional wrench-to-bolt-axis alignment gate

    def __post_init__(self):
        for name in ("drift_rate", "loss_rate", "redetect_delay", "ambiguity_epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.engage_threshold <= 0:
            raise ValueError("engage_threshold must be positive")
        if self.axis_max_deg is not None and not (0 < self.axis_max_deg <= 180):
            raise ValueError("axis_max_deg must be in (0, 180]")


@dataclass(frozen=True)
class EngagementState:
    """Which bolt site (if any) the bit tip is currently on."""

    engaged_site: tuple[str, str] | None = None   # (part_id, site_id)
    tip_distance: float | None = None             # mm, only when engaged
    tracking_ok: bool = True

    @property
    def engaged(self) -> bool:
        return self.engaged_site is not None


NOT_TRACKING = EngagementState(None, None, False)
DISENGAGED = EngagementState(None, None, True)


def tip_position(wrench_pose: Pose, tool: ToolModel) -> Vec3:
    """World-frame position of the bit tip for a given wrench body pose."""
    return wrench_pose.apply(tool.bit_tip_offset.translation)


class SiteIndex:
    """World-frame bolt head points for a set of parts, precomputed once.

    Parts are immutable and mounted rigidly, so the per-tick engagement test
    reduces to one vectorized distance computation.
    """

    def __init__(self, parts: list[Part] | tuple[Part, ...]):
        keys: list[tuple[str, str]] = []
        points: list[Vec3] = []
        axes: list[Vec3] = []
        for part in parts:
            for site in part.sites:
                keys.append((part.part_id, site.site_id))
                points.append(part.mount_pose.apply(site.head_point))
                axes.append(quat_rotate(part.mount_pose.rotation, site.axis))
        self.keys = keys
        self.points = np.asarray(points, dtype=np.float64)
        self.axes = axes

    def nearest_two(self, tip: Vec3) -> tuple[int, float, float]:
        """Index and distance of the nearest site, plus the runner-up distance."""
        d2 = np.sum((self.points - np.asarray(tip)) ** 2, axis=1)
        best = int(np.argmin(d2))
        best_d = math.sqrt(float(d2[best]))
        if len(d2) < 2:
            return best, best_d, math.inf
        d2[best] = np.inf
        second_d = math.sqrt(float(d2.min()))
        return best, best_d, second_d


def classify_engagement(
    wrench_pose: Pose,
    tool: ToolModel,
    parts,
    cfg: TrackingConfig,
    tracking_ok: bool = True,
    *,
    index: SiteIndex | None = None,
) -> EngagementState:
    """Apply the engagement criterion to the current (reported) wrench pose.

    Returns the nearest site iff its tip distance is within the threshold and
    the runner-up is at least `ambiguity_epsilon` farther away.
    """
    if not tracking_ok:
        return NOT_TRACKING
    if index is None:
        index = SiteIndex(parts)
    tip = tip_position(wrench_pose, tool)
    best, best_d, second_d = index.nearest_two(tip)
    if best_d > cfg.engage_threshold:
        return DISENGAGED
    if second_d - best_d < cfg.ambiguity_epsilon:
        return DISENGAGED  # ambiguous between two sites: refuse to engage
    if cfg.axis_max_deg is not None:
        # Optional gate: the wrench's body z axis must line up with the
        # bolt's outward axis to within the configured cone.
        wz = quat_rotate(wrench_pose.rotation, (0.0, 0.0, 1.0))
        ax, ay, az = index.axes[best]
        dot = wz[0] * ax + wz[1] * ay + wz[2] * az
        if dot < math.cos(math.radians(cfg.axis_max_deg)):
            return DISENGAGED
    return EngagementState(index.keys[best], best_d, True)


def _poisson(rng: Random, lam: float) -> int:
    """Knuth's method; lam stays tiny here (loss_rate * dt per tick)."""
    if lam <= 0.0:
        return 0
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


class TrackingSimulator:
    """Stand-in for the camera tracking stack.

    Losses arrive as a Poisson process while tracking is up; each loss blanks
    the reported pose for `redetect_delay` seconds. Positional drift
    accumulates as a random walk and resets on re-detection (a fresh detection
    re-localizes the wrench). With drift_rate == 0 and loss_rate == 0 the
    reported pose is the true pose, bit for bit.
    """

    def __init__(self, cfg: TrackingConfig, rng: Random):
        self.cfg = cfg
        self.rng = rng
        self.tracking_ok = True
        self._until_redetect = 0.0
        self._drift = [0.0, 0.0, 0.0]

    @property
    def noiseless(self) -> bool:
        return self.cfg.drift_rate == 0.0 and self.cfg.loss_rate == 0.0

    def step(self, dt: float) -> list[str]:
        """Advance by dt seconds; returns tracking events ("loss" / "redetect")."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if not self.tracking_ok:
            self._until_redetect -= dt
            if self._until_redetect <= 0.0:
                # Re-detection re-localizes the wrench: drift starts over.
                self.tracking_ok = True
                self._drift = [0.0, 0.0, 0.0]
                return ["redetect"]
            return []
        if self.noiseless:
            return []
        if self.cfg.loss_rate > 0.0:
            if _poisson(self.rng, self.cfg.loss_rate * dt) > 0:
                self.tracking_ok = False
                self._until_redetect = self.cfg.redetect_delay
                return ["loss"]
        if self.cfg.drift_rate > 0.0:
            scale = self.cfg.drift_rate * math.sqrt(dt)
            for i in range(3):
                self._drift[i] += self.rng.gauss(0.0, scale)
        return []

    def observe(self, true_pose: Pose) -> Pose | None:
        """Reported wrench pose, or None while tracking is lost."""
        if not self.tracking_ok:
            return None
        if self.noiseless:
            return true_pose
        dx, dy, dz = self._drift
        if dx == 0.0 and dy == 0.0 and dz == 0.0:
            return true_pose
        tx, ty, tz = true_pose.translation
        return Pose((tx + dx, ty + dy, tz + dz), true_pose.rotation)
