import math
from random import Random

import pytest

from torqueflow.geometry import Pose, compose, quat_from_axis_angle
from torqueflow.scene import ToolModel, make_grid
from torqueflow.tracking import (
    SiteIndex,
    TrackingConfig,
    TrackingSimulator,
    classify_engagement,
    tip_position,
)

CFG = TrackingConfig(engage_threshold=15.0, ambiguity_epsilon=1.0)


def body_pose_for_tip(tool: ToolModel, tip) -> Pose:
    ox, oy, oz = tool.bit_tip_offset.translation
    return Pose((tip[0] - ox, tip[1] - oy, tip[2] - oz))


def test_tip_position_zero_offset():
    tool = ToolModel(Pose())
    assert tip_position(Pose(), tool) == (0.0, 0.0, 0.0)


def test_tip_position_pure_translation():
    tool = ToolModel(Pose((0, 0, 100)))
    tip = tip_position(Pose((10, 0, 0)), tool)
    assert tip == (10.0, 0.0, 100.0)


def test_tip_position_rotated_offset():
    tool = ToolModel(Pose((0, 0, 100)))
    wrench = Pose((5.0, 6.0, 7.0), quat_from_axis_angle((1, 0, 0), math.pi / 2))
    tx, ty, tz = tip_position(wrench, tool)
    assert abs(tx - 5.0) < 1e-9
    assert abs(ty - (6.0 - 100.0)) < 1e-9
    assert abs(tz - 7.0) < 1e-9


def test_engagement_on_exact_head_point():
    grid = make_grid(3, 3, 30.0)
    tool = ToolModel(Pose((0, 0, -120)))
    pose = body_pose_for_tip(tool, (30.0, 30.0, 0.0))
    st = classify_engagement(pose, tool, [grid], CFG)
    assert st.engaged_site == ("grid", "r1c1")
    assert st.tip_distance < 1e-12


def test_engagement_beyond_threshold_is_none():
    grid = make_grid(3, 3, 30.0)
    tool = ToolModel(Pose())
    pose = body_pose_for_tip(tool, (500.0, 500.0, 0.0))
    st = classify_engagement(pose, tool, [grid], CFG)
    assert st.engaged_site is None
    assert st.tracking_ok


def test_engagement_ambiguous_midpoint_refused():
    grid = make_grid(1, 2, 20.0)  # sites at x=0 and x=20
    tool = ToolModel(Pose())
    mid = body_pose_for_tip(tool, (10.0, 0.0, 0.0))
    st = classify_engagement(mid, tool, [grid], CFG)
    assert st.engaged_site is None
    # slightly off the midpoint both candidates are within epsilon: still refused
    near = body_pose_for_tip(tool, (10.3, 0.0, 0.0))
    assert classify_engagement(near, tool, [grid], CFG).engaged_site is None
    # clearly nearer one site engages
    clear = body_pose_for_tip(tool, (18.0, 0.0, 0.0))
    assert classify_engagement(clear, tool, [grid], CFG).engaged_site == ("grid", "r0c1")


def test_no_engagement_while_tracking_lost():
    grid = make_grid(1, 1, 10.0)
    tool = ToolModel(Pose())
    pose = body_pose_for_tip(tool, (0.0, 0.0, 0.0))
    st = classify_engagement(pose, tool, [grid], CFG, tracking_ok=False)
    assert st.engaged_site is None
    assert not st.tracking_ok


def test_engagement_never_beyond_threshold_property():
    grid = make_grid(4, 4, 25.0)
    tool = ToolModel(Pose())
    index = SiteIndex([grid])
    rng = Random(5)
    for _ in range(300):
        tip = (rng.uniform(-50, 150), rng.uniform(-50, 150), rng.uniform(-5, 25))
        st = classify_engagement(body_pose_for_tip(tool, tip), tool, [grid], CFG,
                                 index=index)
        if st.engaged_site is not None:
            assert st.tip_distance <= CFG.engage_threshold


def test_frame_invariance_of_engagement():
    grid = make_grid(3, 4, 30.0)
    tool = ToolModel(Pose((0, 0, -120)))
    rng = Random(11)
    for _ in range(100):
        tip = (rng.uniform(-20, 120), rng.uniform(-20, 80), rng.uniform(0, 10))
        wrench = body_pose_for_tip(tool, tip)
        base = classify_engagement(wrench, tool, [grid], CFG)
        world = Pose(
            (rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(-500, 500)),
            quat_from_axis_angle((rng.random() + 0.1, rng.random(), rng.random()),
                                 rng.uniform(-math.pi, math.pi)),
        )
        import dataclasses
        moved_grid = dataclasses.replace(grid, mount_pose=compose(world, grid.mount_pose))
        moved = classify_engagement(compose(world, wrench), tool, [moved_grid], CFG)
        assert moved.engaged_site == base.engaged_site


def test_noiseless_tracking_is_bit_for_bit():
    sim = TrackingSimulator(TrackingConfig(drift_rate=0.0, loss_rate=0.0), Random(1))
    pose = Pose((1.25, -7.5, 0.125))
    for _ in range(50):
        assert sim.step(0.02) == []
        assert sim.observe(pose) is pose


def test_loss_blanks_pose_until_redetect():
    import dataclasses
    cfg = TrackingConfig(drift_rate=0.0, loss_rate=1000.0, redetect_delay=0.5)
    sim = TrackingSimulator(cfg, Random(3))
    events = sim.step(0.1)
    assert events == ["loss"]
    assert sim.observe(Pose()) is None
    # quiet the loss process so the redetect sticks
    sim.cfg = dataclasses.replace(cfg, loss_rate=0.0)
    assert sim.step(0.1) == []          # 0.2 s remaining
    assert sim.observe(Pose()) is None
    out = []
    waited = 0.0
    while waited < 1.0 and "redetect" not in out:
        out += sim.step(0.1)
        waited += 0.1
    assert "redetect" in out
    assert sim.observe(Pose()) is not None


def test_loss_count_matches_poisson_statistics():
    cfg = TrackingConfig(drift_rate=0.0, loss_rate=0.1, redetect_delay=0.1)
    sim = TrackingSimulator(cfg, Random(42))
    losses = 0
    steps = 10000  # 1000 s at dt=0.1
    for _ in range(steps):
        losses += sim.step(0.1).count("loss")
    # expectation ~100, sigma ~10; allow 3 sigma
    assert 70 <= losses <= 130


def test_drift_accumulates_and_resets_on_redetect():
    cfg = TrackingConfig(drift_rate=5.0, loss_rate=0.0, redetect_delay=0.2)
    sim = TrackingSimulator(cfg, Random(9))
    pose = Pose()
    for _ in range(200):
        sim.step(0.05)
    drifted = sim.observe(pose)
    assert drifted is not None
    assert any(abs(c) > 1e-6 for c in drifted.translation)
    # force a loss/redetect cycle; drift must reset
    sim.tracking_ok = False
    sim._until_redetect = 0.05
    assert "redetect" in sim.step(0.1)
    assert sim.observe(pose).translation == pose.translation


def test_config_validation():
    with pytest.raises(ValueError):
        TrackingConfig(engage_threshold=0.0)
    with pytest.raises(ValueError):
        TrackingConfig(drift_rate=-1.0)


def test_optional_axis_alignment_gate():
    import math as m
    from torqueflow.geometry import quat_from_axis_angle
    grid = make_grid(1, 1, 10.0)
    tool = ToolModel(Pose())
    upright = Pose((0.0, 0.0, 5.0))
    tilted = Pose((0.0, 0.0, 5.0), quat_from_axis_angle((1, 0, 0), m.radians(60)))
    strict = TrackingConfig(axis_max_deg=30.0)
    # distance-only default ignores orientation entirely
    assert classify_engagement(tilted, tool, [grid], CFG).engaged_site is not None
    # the optional gate refuses a 60-degree tilt but passes upright
    assert classify_engagement(tilted, tool, [grid], strict).engaged_site is None
    assert classify_engagement(upright, tool, [grid], strict).engaged_site is not None
