"""Digital twin of the bench: parts with bolt sites, the wrench tool model,
and tightening scenarios, plus the JSON scene file format.

All values are immutable after construction; a loaded scene can be shared
freely between threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import IDENTITY, GeometryError, Pose, Vec3

# Supported wrench range, in integer centinewton-meters (1 N.m == 100 cNm).
TORQUE_MIN_CNM = 100
TORQUE_MAX_CNM = 1000

AXIS_NORM_TOL = 1e-9


class SceneError(ValueError):
    """Invalid scene content: bad references, out-of-range torques, parse errors."""


def _unit_axis(v) -> Vec3:
    x, y, z = (float(c) for c in v)
    n = math.sqrt(x * x + y * y + z * z)
    if n == 0.0:
        raise SceneError("site axis must be non-zero")
    if abs(n - 1.0) > 1e-6:
        raise SceneError(f"site axis norm {n:.9f} too far from 1")
    return (x / n, y / n, z / n)


@dataclass(frozen=True)
class BoltSite:
    """One tapped hole: head point and outward axis in the part's local frame (mm)."""

    site_id: str
    head_point: Vec3
    axis: Vec3 = (0.0, 0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "head_point", tuple(float(c) for c in self.head_point))
        object.__setattr__(self, "axis", _unit_axis(self.axis))


@dataclass(frozen=True)
class Part:
    part_id: str
    sites: tuple[BoltSite, ...]
    mount_pose: Pose = IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.sites:
            raise SceneError(f"part {self.part_id!r} has no sites")
        ids = [s.site_id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise SceneError(f"part {self.part_id!r} has duplicate site ids")

    def site(self, site_id: str) -> BoltSite:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise SceneError(f"unknown site {site_id!r} on part {self.part_id!r}")

    def has_site(self, site_id: str) -> bool:
        return any(s.site_id == site_id for s in self.sites)


@dataclass(frozen=True)
class ToolModel:
    """Wrench geometry: transform from the wrench body frame to the bit-tip frame."""

    bit_tip_offset: Pose = IDENTITY


@dataclass(frozen=True)
class ScenarioStep:
    part_id: str
    site_id: str
    target_cnm: int

    def __post_init__(self):
        object.__setattr__(self, "target_cnm", int(self.target_cnm))

    @property
    def site_key(self) -> tuple[str, str]:
        return (self.part_id, self.site_id)


@dataclass(frozen=True)
class Scenario:
    """An ordered tightening sequence over one or more parts."""

    scenario_id: str
    steps: tuple[ScenarioStep, ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "steps",
            tuple(s if isinstance(s, ScenarioStep) else ScenarioStep(*s) for s in self.steps),
        )
        seen = set()
        for i, s in enumerate(self.steps):
            if not (TORQUE_MIN_CNM <= s.target_cnm <= TORQUE_MAX_CNM):
                raise SceneError(
                    f"scenario {self.scenario_id!r} step {i}: torque out of range "
                    f"({s.target_cnm} cNm, supported {TORQUE_MIN_CNM}..{TORQUE_MAX_CNM})"
                )
            if s.site_key in seen:
                raise SceneError(
                    f"scenario {self.scenario_id!r} step {i}: site "
                    f"{s.part_id}/{s.site_id} appears twice"
                )
            seen.add(s.site_key)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def site_keys(self) -> set[tuple[str, str]]:
        return {s.site_key for s in self.steps}

    def target_for(self, part_id: str, site_id: str) -> int | None:
        for s in self.steps:
            if s.part_id == part_id and s.site_id == site_id:
                return s.target_cnm
        return None


def make_grid(rows: int, cols: int, pitch_mm: float, *, part_id: str = "grid",
              mount_pose: Pose = IDENTITY) -> Part:
    """Rectangular lattice of tapped holes in the z=0 plane, axes along +z.

    Site ids are "r{i}c{j}" with the head point at (j*pitch, i*pitch, 0):
    row index advances along +y, column index along +x.
    """
    if rows < 1 or cols < 1:
        raise SceneError(f"grid needs positive dimensions, got {rows}x{cols}")
    if pitch_mm <= 0:
        raise SceneError(f"grid pitch must be positive, got {pitch_mm}")
    sites = [
        BoltSite(f"r{i}c{j}", (j * pitch_mm, i * pitch_mm, 0.0))
        for i in range(rows)
        for j in range(cols)
    ]
    return Part(part_id, tuple(sites), mount_pose)


def make_flange(n: int, radius_mm: float, *, part_id: str = "flange",
                mount_pose: Pose = IDENTITY) -> Part:
    """n holes equally spaced on a circle of the given radius, axes along +z.

    Site ids are "f{k}", with hole k at angle 2*pi*k/n from the +x direction.
    """
    if n < 1:
        raise SceneError(f"flange needs at least one hole, got {n}")
    if radius_mm <= 0:
        raise SceneError(f"flange radius must be positive, got {radius_mm}")
    sites = []
    for k in range(n):
        ang = 2.0 * math.pi * k / n
        sites.append(BoltSite(f"f{k}", (radius_mm * math.cos(ang), radius_mm * math.sin(ang), 0.0)))
    return Part(part_id, tuple(sites), mount_pose)


@dataclass(frozen=True)
class Scene:
    """Everything the orchestrator needs to know about the bench."""

    parts: tuple[Part, ...]
    tool: ToolModel = field(default_factory=ToolModel)
    scenarios: tuple[Scenario, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        ids = [p.part_id for p in self.parts]
        if len(set(ids)) != len(ids):
            raise SceneError("duplicate part ids")
        for sc in self.scenarios:
            self._check_scenario(sc)

    def _check_scenario(self, sc: Scenario) -> None:
        for i, step in enumerate(sc.steps):
            part = next((p for p in self.parts if p.part_id == step.part_id), None)
            if part is None:
                raise SceneError(
                    f"scenario {sc.scenario_id!r} step {i}: unknown part {step.part_id!r}"
                )
            if not part.has_site(step.site_id):
                raise SceneError(
                    f"scenario {sc.scenario_id!r} step {i}: unknown site "
                    f"{step.site_id!r} on part {step.part_id!r}"
                )

    def part(self, part_id: str) -> Part:
        for p in self.parts:
            if p.part_id == part_id:
                return p
        raise SceneError(f"unknown part {part_id!r}")

    def scenario(self, scenario_id: str) -> Scenario:
        for sc in self.scenarios:
            if sc.scenario_id == scenario_id:
                return sc
        raise SceneError(f"unknown scenario {scenario_id!r}")

    def world_head_point(self, part_id: str, site_id: str) -> Vec3:
        part = self.part(part_id)
        return part.mount_pose.apply(part.site(site_id).head_point)


# --- scene file format (strict JSON) ---------------------------------------


def _part_to_json(part: Part) -> dict:
    return {
        "part_id": part.part_id,
        "mount_pose": part.mount_pose.to_json(),
        "sites": [
            {"site_id": s.site_id, "head_point": list(s.head_point), "axis": list(s.axis)}
            for s in part.sites
        ],
    }


def _part_from_json(obj: dict) -> Part:
    part_id = obj["part_id"]
    mount = Pose.from_json(obj["mount_pose"]) if "mount_pose" in obj else IDENTITY
    gen = obj.get("generator")
    if gen is not None:
        kind = gen.get("kind")
        if kind == "grid":
            return make_grid(gen["rows"], gen["cols"], gen["pitch_mm"],
                             part_id=part_id, mount_pose=mount)
        if kind == "flange":
            return make_flange(gen["n"], gen["radius_mm"],
                               part_id=part_id, mount_pose=mount)
        raise SceneError(f"part {part_id!r}: unknown generator kind {kind!r}")
    sites = tuple(
        BoltSite(s["site_id"], s["head_point"], s.get("axis", (0.0, 0.0, 1.0)))
        for s in obj["sites"]
    )
    return Part(part_id, sites, mount)


def scene_to_json(scene: Scene) -> dict:
    return {
        "parts": [_part_to_json(p) for p in scene.parts],
        "tool": {"bit_tip_offset": scene.tool.bit_tip_offset.to_json()},
        "scenarios": [
            {
                "scenario_id": sc.scenario_id,
                "steps": [[s.part_id, s.site_id, s.target_cnm] for s in sc.steps],
            }
            for sc in scene.scenarios
        ],
    }


def scene_from_json(doc: dict) -> Scene:
    try:
        parts = tuple(_part_from_json(p) for p in doc["parts"])
        tool = ToolModel(Pose.from_json(doc["tool"]["bit_tip_offset"]))
        scenarios = tuple(
            Scenario(sc["scenario_id"], tuple(ScenarioStep(*step) for step in sc["steps"]))
            for sc in doc.get("scenarios", [])
        )
    except SceneError:
        raise
    except GeometryError as e:
        raise SceneError(f"bad pose in scene: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise SceneError(f"malformed scene document: {e}") from e
    return Scene(parts, tool, scenarios)


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SceneError(f"cannot read scene file {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"{path}: not valid JSON: {e}") from e
    return scene_from_json(doc)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(
        json.dumps(scene_to_json(scene), indent=2) + "\n", encoding="utf-8"
    )


# --- bundled bench ----------------------------------------------------------

# Wrench body hovers in the z=+120 plane; the bit tip extends 120 mm along -z,
# so a body at (x, y, 120) with identity rotation lands the tip on z=0.
BIT_TIP_OFFSET_MM = (0.0, 0.0, -120.0)


def build_bench_scene() -> Scene:
    """The default bench: a 5x10 grid, a 13-hole flange and three 10-step sequences."""
    grid = make_grid(5, 10, 30.0, part_id="grid")
    flange = make_flange(13, 60.0, part_id="flange",
                         mount_pose=Pose((420.0, 60.0, 0.0)))
    tool = ToolModel(Pose(BIT_TIP_OFFSET_MM))

    def sc(scenario_id, steps):
        return Scenario(scenario_id, tuple(ScenarioStep(*s) for s in steps))

    scenarios = (
        sc("seq1", [
            ("grid", "r0c0", 300), ("grid", "r0c9", 300), ("grid", "r4c9", 500),
            ("grid", "r4c0", 500), ("grid", "r2c4", 300),
            ("flange", "f0", 500), ("flange", "f6", 300), ("flange", "f3", 500),
            ("flange", "f9", 300), ("flange", "f11", 500),
        ]),
        sc("seq2", [
            ("grid", "r2c4", 500), ("grid", "r0c2", 300), ("grid", "r4c7", 300),
            ("grid", "r1c8", 500), ("grid", "r3c1", 300),
            ("flange", "f1", 300), ("flange", "f7", 500), ("flange", "f4", 300),
            ("flange", "f10", 500), ("flange", "f2", 300),
        ]),
        sc("seq3", [
            ("grid", "r4c4", 300), ("grid", "r0c5", 500), ("grid", "r2c0", 300),
            ("grid", "r2c9", 500), ("grid", "r1c3", 300),
            ("flange", "f5", 500), ("flange", "f12", 300), ("flange", "f8", 500),
            ("flange", "f2", 300), ("flange", "f6", 500),
        ]),
    )
    return Scene((grid, flange), tool, scenarios)


def bundled_scene_path() -> Path:
    return Path(__file__).parent / "data" / "bench.scene"
