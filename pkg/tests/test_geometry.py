import math

import pytest
from hypothesis import given, strategies as st

from torqueflow.geometry import (
    IDENTITY,
    GeometryError,
    Pose,
    compose,
    distance,
    invert,
    quat_from_axis_angle,
    rotate_about,
)

TOL = 1e-9


def random_pose_strategy():
    angle = st.floats(-math.pi, math.pi, allow_nan=False)
    coord = st.floats(-500, 500, allow_nan=False)
    axis = st.sampled_from([(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 2, 3)])
    return st.builds(
        lambda t, ax, a: Pose(t, quat_from_axis_angle(ax, a)),
        st.tuples(coord, coord, coord), axis, angle,
    )


def poses_close(a: Pose, b: Pose, tol=TOL) -> bool:
    if distance(a.translation, b.translation) > tol:
        return False
    # q and -q are the same rotation
    dot = sum(x * y for x, y in zip(a.rotation, b.rotation))
    return abs(abs(dot) - 1.0) < tol


def test_compose_identity():
    p = Pose((1.0, 2.0, 3.0), quat_from_axis_angle((0, 0, 1), 0.7))
    assert poses_close(compose(IDENTITY, p), p)
    assert poses_close(compose(p, IDENTITY), p)


def test_compose_with_inverse_is_identity():
    p = Pose((10.0, -4.0, 2.5), quat_from_axis_angle((1, 2, 3), 1.1))
    assert poses_close(compose(p, invert(p)), IDENTITY)
    assert poses_close(compose(invert(p), p), IDENTITY)


def test_two_quarter_turns_make_a_half_turn():
    q90 = rotate_about((0, 0, 1), math.pi / 2)
    q180 = compose(q90, q90)
    expected = rotate_about((0, 0, 1), math.pi)
    assert poses_close(q180, expected)
    # and the half turn flips x to -x
    assert distance(q180.apply((1.0, 0.0, 0.0)), (-1.0, 0.0, 0.0)) < TOL


def test_apply_translates_and_rotates():
    p = Pose((10.0, 0.0, 0.0), quat_from_axis_angle((1, 0, 0), math.pi / 2))
    # +90 deg about x maps (0, 0, 100) onto (0, -100, 0)
    assert distance(p.apply((0.0, 0.0, 100.0)), (10.0, -100.0, 0.0)) < 1e-9


def test_quaternion_normalized_on_construction():
    p = Pose((0, 0, 0), (1.0 + 1e-8, 0.0, 0.0, 0.0))
    assert abs(sum(c * c for c in p.rotation) - 1.0) < 1e-12


def test_non_unit_quaternion_rejected():
    with pytest.raises(GeometryError):
        Pose((0, 0, 0), (2.0, 0.0, 0.0, 0.0))


@given(random_pose_strategy(), random_pose_strategy(), random_pose_strategy())
def test_compose_associative(a, b, c):
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert poses_close(left, right, tol=1e-6)


@given(random_pose_strategy())
def test_double_invert_is_identity_map(p):
    assert poses_close(invert(invert(p)), p, tol=1e-9)


@given(random_pose_strategy(), st.tuples(st.floats(-100, 100), st.floats(-100, 100),
                                         st.floats(-100, 100)))
def test_compose_matches_sequential_apply(p, v):
    q = Pose((5.0, -3.0, 8.0), quat_from_axis_angle((0, 1, 0), 0.4))
    assert distance(compose(p, q).apply(v), p.apply(q.apply(v))) < 1e-6
