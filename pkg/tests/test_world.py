import math

import numpy as np
import pytest
from conftest import empty_grid
from hypothesis import example, given, settings
from hypothesis import strategies as st

from hybridnav.costmap import LETHAL
from hybridnav.geometry import Pose, Twist, wrap_angle
from hybridnav.world import (
    Disc,
    ObstacleScript,
    PoseOutOfBounds,
    RobotState,
    SensorModel,
    check_collision,
    format_map,
    obstacle_pose,
    parse_map,
    sense,
    step_robot,
)


def euler(pose: Pose, cmd: Twist, dt: float, h: float = 1e-4) -> tuple[float, float, float]:
    x, y, th = pose.x, pose.y, pose.theta
    n = int(round(dt / h))
    h = dt / n
    for _ in range(n):
        # midpoint rule keeps the oracle's own error well under 1e-6
        mid = th + 0.5 * cmd.w * h
        x += cmd.v * h * math.cos(mid)
        y += cmd.v * h * math.sin(mid)
        th += cmd.w * h
    return x, y, th


# --- kinematics ---------------------------------------------------------------


def test_straight_line():
    s = step_robot(RobotState(Pose(0, 0, 0)), Twist(1.0, 0.0), 1.0)
    assert (s.pose.x, s.pose.y, s.pose.theta) == pytest.approx((1.0, 0.0, 0.0), abs=1e-12)
    assert s.time == 1.0


def test_pure_rotation():
    s = step_robot(RobotState(Pose(0, 0, 0)), Twist(0.0, math.pi / 2), 1.0)
    assert (s.pose.x, s.pose.y, s.pose.theta) == pytest.approx((0.0, 0.0, math.pi / 2), abs=1e-12)


def test_half_circle_matches_closed_form_and_euler():
    s = step_robot(RobotState(Pose(0, 0, 0)), Twist(1.0, 1.0), math.pi)
    assert (s.pose.x, s.pose.y) == pytest.approx((0.0, 2.0), abs=1e-12)
    assert abs(wrap_angle(s.pose.theta - math.pi)) < 1e-12
    ex, ey, eth = euler(Pose(0, 0, 0), Twist(1.0, 1.0), math.pi)
    assert (s.pose.x, s.pose.y) == pytest.approx((ex, ey), abs=1e-6)
    assert abs(wrap_angle(s.pose.theta - eth)) < 1e-6


@settings(max_examples=50, deadline=None)
@given(
    v=st.floats(-1.0, 1.0),
    w=st.floats(-2.0, 2.0),
    th=st.floats(-math.pi, math.pi),
    dt=st.floats(0.05, 2.0),
)
def test_closed_form_matches_fine_euler(v, w, th, dt):
    start = Pose(0.3, -0.7, th)
    s = step_robot(RobotState(start), Twist(v, w), dt)
    ex, ey, eth = euler(start, Twist(v, w), dt, h=1e-3)
    assert math.hypot(s.pose.x - ex, s.pose.y - ey) < 1e-6
    # below the straight-line threshold the heading is held, by up to 1e-6 * dt
    assert abs(wrap_angle(s.pose.theta - eth)) < 1e-6 * dt + 1e-9


@settings(max_examples=300, deadline=None)
@given(
    v=st.floats(-1.0, 1.0),
    w=st.one_of(st.just(0.0), st.floats(-2.0, 2.0), st.floats(-1e-5, 1e-5)),
    th=st.floats(-math.pi, math.pi),
    dt=st.floats(0.01, 3.0),
    k=st.integers(1, 12),
)
def test_substeps_compose_to_one_step(v, w, th, dt, k):
    cmd = Twist(v, w)
    one = step_robot(RobotState(Pose(1.0, 2.0, th)), cmd, dt)
    many = RobotState(Pose(1.0, 2.0, th))
    for _ in range(k):
        many = step_robot(many, cmd, dt / k)
    assert abs(one.pose.x - many.pose.x) <= 1e-9
    assert abs(one.pose.y - many.pose.y) <= 1e-9
    assert abs(wrap_angle(one.pose.theta - many.pose.theta)) <= 1e-9
    assert many.time == pytest.approx(dt, abs=1e-12)


@given(th=st.floats(-50.0, 50.0))
def test_heading_stays_normalised(th):
    p = Pose(0, 0, th)
    assert -math.pi < p.theta <= math.pi


def test_commands_are_clamped():
    s = step_robot(RobotState(Pose(0, 0, 0)), Twist(5.0, -9.0), 0.1)
    assert s.twist == Twist(1.0, -2.0)


def test_non_positive_dt_rejected():
    with pytest.raises(ValueError):
        step_robot(RobotState(Pose(0, 0, 0)), Twist(1, 0), 0.0)


# --- scripted obstacles ---------------------------------------------------------


def test_obstacle_interpolation_and_clamping():
    sc = ObstacleScript(0.25, ((0.0, Pose(0, 0, 0)), (10.0, Pose(10, 0, 0))))
    assert obstacle_pose(sc, 5.0) == Pose(5, 0, 0)
    assert obstacle_pose(sc, 20.0) == Pose(10, 0, 0)
    late = ObstacleScript(0.25, ((2.0, Pose(1, 1, 0)), (3.0, Pose(2, 1, 0))))
    assert obstacle_pose(late, 0.5) == Pose(1, 1, 0)


def test_obstacle_knots_must_increase():
    with pytest.raises(ValueError):
        ObstacleScript(0.25, ((1.0, Pose(0, 0)), (1.0, Pose(1, 0))))


# --- sensing ------------------------------------------------------------------


def open_world():
    return empty_grid(200, 200, 0.05, origin=(-5.0, -5.0))


def occupied_near(obs, x, y, tol=0.06):
    grid = obs.grid
    rows, cols = np.nonzero(grid.cells == LETHAL)
    cx, cy = grid.cell_center(rows, cols)
    return bool(np.any(np.hypot(cx - x, cy - y) <= tol))


def test_in_range_disc_is_registered():
    model = SensorModel(max_range=10.0, min_range=0.5, angular_rays=360)
    obs = sense(RobotState(Pose(0, 0, 0)), open_world(), [Disc(2.1, 0.0, 0.1)], model)
    assert occupied_near(obs, 2.0, 0.0)
    assert np.min(obs.hit_ranges) == pytest.approx(2.0, abs=1e-9)


def test_disc_inside_min_range_is_invisible():
    model = SensorModel(max_range=10.0, min_range=0.5, angular_rays=360)
    world = open_world()
    obs = sense(RobotState(Pose(0, 0, 0)), world, [Disc(0.4, 0.0, 0.1)], model)
    assert len(obs.hit_ranges) == 0
    np.testing.assert_array_equal(obs.grid.cells, world.cells)


def test_empty_world_reproduces_static_map():
    world = open_world()
    world.cells[10:20, 30:40] = LETHAL
    obs = sense(RobotState(Pose(0, 0, 0.3)), world, [], SensorModel())
    np.testing.assert_array_equal(obs.grid.cells, world.cells)


def test_disc_behind_wall_is_occluded():
    world = open_world()
    # wall at x in [1.0, 1.1)
    world.cells[:, 120:122] = LETHAL
    obs = sense(RobotState(Pose(0, 0, 0)), world, [Disc(2.5, 0.0, 0.3)], SensorModel(angular_rays=720))
    assert len(obs.hit_ranges) == 0


@settings(max_examples=40, deadline=None)
@given(
    discs=st.lists(
        st.tuples(st.floats(-3.5, 3.5), st.floats(-3.5, 3.5), st.floats(0.05, 0.4)),
        min_size=1,
        max_size=4,
    ),
    lo=st.floats(0.0, 1.0),
    extra=st.floats(0.0, 1.5),
)
def test_smaller_blind_spot_never_loses_hits(discs, lo, extra):
    world = open_world()
    obstacles = [Disc(*d) for d in discs]
    state = RobotState(Pose(0.0, 0.0, 0.4))
    near = sense(state, world, obstacles, SensorModel(min_range=lo, angular_rays=90))
    far = sense(state, world, obstacles, SensorModel(min_range=lo + extra, angular_rays=90))
    assert np.all(near.grid.cells[far.grid.cells == LETHAL] == LETHAL)


def test_scan_layer_sees_walls_only_through_rays():
    world = empty_grid(400, 100, 0.05, origin=(-5.0, -2.5))
    world.cells[:, 100:102] = LETHAL  # wall at x in [0, 0.1)
    world.cells[:, 380:382] = LETHAL  # far wall at x = 14
    world.cells[40:60, 180:182] = LETHAL  # short wall at x = 4, hidden behind the disc
    model = SensorModel(max_range=10.0, min_range=0.4, angular_rays=720, static_layer="scan")
    state = RobotState(Pose(1.0, 0.0, 0.0))
    obs = sense(state, world, [Disc(2.5, 0.0, 0.5)], model)
    assert occupied_near(obs, 0.05, 0.0, tol=0.08)  # wall 0.95 m behind the robot is hit by rays
    assert occupied_near(obs, 14.0, 0.0, tol=0.08)  # beyond range: taken from the known map
    assert not occupied_near(obs, 4.05, 0.0, tol=0.08)  # shadowed by the disc
    assert occupied_near(obs, 2.0, 0.0)


def test_sensing_outside_map_raises():
    with pytest.raises(PoseOutOfBounds):
        sense(RobotState(Pose(50.0, 0.0)), open_world(), [], SensorModel())


def test_sensor_model_validation():
    with pytest.raises(ValueError):
        SensorModel(min_range=2.0, max_range=1.0)
    with pytest.raises(ValueError):
        SensorModel(angular_rays=4)


# --- collision ------------------------------------------------------------------


def test_separated_robot_does_not_collide():
    grid = empty_grid(40, 40, 0.1, origin=(-2.0, -2.0))
    grid.cells[20, 30] = LETHAL  # centre (1.05, 0.05)
    assert not check_collision(Pose(0, 0), grid, [], 0.3)


def test_overlapping_disc_collides():
    assert check_collision(Pose(0, 0), empty_grid(10, 10, 0.1), [Disc(0.3, 0.0, 0.2)], 0.2)


def test_tangent_disc_collides_and_epsilon_flips():
    grid = empty_grid(4, 4, 0.5, origin=(-1.0, -1.0))
    assert check_collision(Pose(0, 0), grid, [Disc(0.75, 0.0, 0.5)], 0.25)
    assert not check_collision(Pose(0, 0), grid, [Disc(0.75, 0.0, 0.5 - 1e-9)], 0.25)
    assert not check_collision(Pose(0, 0), grid, [Disc(0.75, 0.0, 0.5)], 0.25 - 1e-9)


def test_tangent_static_cell_collides_and_epsilon_flips():
    grid = empty_grid(4, 4, 0.5)
    grid.cells[0, 2] = LETHAL  # spans x in [1.0, 1.5]
    assert check_collision(Pose(0.5, 0.25), grid, [], 0.5)
    assert not check_collision(Pose(0.5, 0.25), grid, [], 0.5 - 1e-9)


@settings(max_examples=100, deadline=None)
@given(
    px=st.floats(-1.0, 1.0),
    py=st.floats(-1.0, 1.0),
    r=st.floats(0.05, 0.6),
    cells=st.lists(st.tuples(st.integers(0, 19), st.integers(0, 19)), max_size=6),
)
@example(px=0.625, py=0.5, r=0.5, cells=[(9, 16)])  # tangent edge on a cell boundary
def test_static_collision_matches_square_distance_oracle(px, py, r, cells):
    grid = empty_grid(20, 20, 0.1, origin=(-1.0, -1.0))
    for rc in cells:
        grid.cells[rc] = LETHAL
    expected = False
    for row, col in cells:
        x0, y0 = -1.0 + col * 0.1, -1.0 + row * 0.1
        dx = max(x0 - px, 0.0, px - (x0 + 0.1))
        dy = max(y0 - py, 0.0, py - (y0 + 0.1))
        expected |= math.hypot(dx, dy) <= r
    assert check_collision(Pose(px, py), grid, [], r) == expected


def test_collision_ignores_the_sensor_blind_spot():
    # a disc well inside min_range is never sensed but still counts
    world = open_world()
    disc = Disc(0.3, 0.0, 0.15)
    obs = sense(RobotState(Pose(0, 0)), world, [disc], SensorModel(min_range=0.4))
    assert len(obs.hit_ranges) == 0
    assert check_collision(Pose(0, 0), world, [disc], 0.2)


# --- map files ------------------------------------------------------------------


def test_map_text_round_trip():
    text = "resolution 0.1 origin -1 2\n#....\n.#...\n..###\n"
    grid = parse_map(text)
    assert grid.width == 5 and grid.height == 3
    assert grid.origin == Pose(-1.0, 2.0, 0.0)
    # first text line is the top row
    assert grid.cells[2, 0] == LETHAL and grid.cells[0, 2] == LETHAL
    assert format_map(grid) == text


@pytest.mark.parametrize(
    "text",
    ["", "resolution 0.1\n...\n", "resolution 0.1 origin 0 0\n..\n...\n", "resolution 0.1 origin 0 0\n.x.\n"],
)
def test_bad_map_text_rejected(text):
    with pytest.raises(ValueError):
        parse_map(text)
