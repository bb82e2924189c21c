import math

import numpy as np
import pytest
from conftest import empty_grid, local_cell, make_local
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import ndimage

from hybridnav.costmap import (
    INSCRIBED,
    LETHAL,
    UNKNOWN,
    GoalOutsideWindow,
    extract_local,
    inflate,
    inflate_cells,
    kernel_penalty,
    polar_cell_diagonal,
    polar_pixel_to_world,
    read_pgm,
    rle_decode_rows,
    rle_encode_rows,
    to_polar,
    write_pgm,
)
from hybridnav.geometry import Pose


def brute_inflation(cells, res, r, R):
    """Cost from the minimum distance to any lethal cell, computed pairwise."""
    lethal = np.argwhere(cells == LETHAL)
    out = cells.copy()
    if len(lethal) == 0:
        return out
    k = math.log(252.0) / (R - r) if R > r else None
    for (i, j), v in np.ndenumerate(cells):
        d = res * min(math.hypot(i - a, j - b) for a, b in lethal)
        if d == 0:
            c = LETHAL
        elif d <= r + 1e-9:
            c = INSCRIBED
        elif k is not None and d <= R + 1e-9:
            c = int(min(252, max(1, round(252.0 * math.exp(-k * (d - r))))))
        else:
            c = 0
        out[i, j] = max(v, c)
    return out


# --- extraction ------------------------------------------------------------------


def test_empty_world_gives_free_window():
    world = empty_grid(100, 100, 0.1, origin=(-5.0, -5.0))
    local = extract_local(world, Pose(0.05, 0.05), 6.0, 0.1)
    assert local.cells.shape == (61, 61)
    assert not local.cells.any()


def test_obstacle_east_lands_ten_cells_east():
    world = empty_grid(100, 100, 0.1, origin=(-5.0, -5.0))
    row, col = world.world_to_cell(1.05, 0.05)
    world.cells[row, col] = LETHAL
    local = extract_local(world, Pose(0.05, 0.05, 0.7), 6.0, 0.1)
    h = local.half_cells
    lethal = np.argwhere(local.cells == LETHAL)
    assert lethal.tolist() == [[h, h + 10]]
    # inverse: the local cell maps back onto the source cell centre
    x, y = local.grid.cell_center(h, h + 10)
    assert (x, y) == pytest.approx((1.05, 0.05), abs=1e-9)


def test_window_past_map_edge_is_unknown():
    world = empty_grid(100, 100, 0.1)
    local = extract_local(world, Pose(0.55, 5.05), 6.0, 0.1)
    h = local.half_cells
    # robot is 0.55 m from the west edge: the 6 columns west of it and beyond are off-map
    assert np.all(local.cells[:, : h - 5] == UNKNOWN)
    assert np.all(local.cells[:, h - 5 :] == 0)


def test_robot_owns_centre_cell():
    world = empty_grid(100, 100, 0.05)
    local = extract_local(world, Pose(2.512, 2.48), 6.0, 0.05)
    h = local.half_cells
    x, y = local.grid.cell_center(h, h)
    assert (x, y) == pytest.approx((2.512, 2.48), abs=1e-12)


# --- inflation -------------------------------------------------------------------


def test_single_cell_inscribed_disc():
    cells = np.zeros((21, 21), dtype=np.uint8)
    cells[10, 10] = LETHAL
    out = inflate(make_local(21, 0.1, cells=cells), 0.3, 0.6).cells
    ii, jj = np.indices(cells.shape)
    within = np.hypot(ii - 10, jj - 10) <= 3.0
    assert np.all(out[within] >= INSCRIBED)
    assert np.all(out[~within] < INSCRIBED)
    np.testing.assert_array_equal(out, brute_inflation(cells, 0.1, 0.3, 0.6))


def test_no_lethal_cells_unchanged():
    cells = np.zeros((15, 15), dtype=np.uint8)
    cells[3, 4] = 100
    cells[0, :] = UNKNOWN
    np.testing.assert_array_equal(inflate_cells(cells, 0.1, 0.3, 0.6), cells)


def test_two_cells_inflate_as_cellwise_max():
    a = np.zeros((25, 25), dtype=np.uint8)
    b = a.copy()
    a[6, 7] = LETHAL
    b[15, 18] = LETHAL
    both = np.maximum(a, b)
    one = inflate_cells(a, 0.1, 0.3, 0.8)
    two = inflate_cells(b, 0.1, 0.3, 0.8)
    np.testing.assert_array_equal(inflate_cells(both, 0.1, 0.3, 0.8), np.maximum(one, two))
    np.testing.assert_array_equal(inflate_cells(both, 0.1, 0.3, 0.8), brute_inflation(both, 0.1, 0.3, 0.8))


grids = hnp.arrays(np.uint8, st.tuples(st.integers(3, 12), st.integers(3, 12)), elements=st.sampled_from([0, 0, 0, 0, LETHAL]))


@settings(max_examples=60, deadline=None)
@given(cells=grids, r=st.sampled_from([0.1, 0.2, 0.3]), extra=st.sampled_from([0.0, 0.15, 0.4]))
def test_inflation_matches_brute_force(cells, r, extra):
    np.testing.assert_array_equal(inflate_cells(cells, 0.1, r, r + extra), brute_inflation(cells, 0.1, r, r + extra))


@settings(max_examples=60, deadline=None)
@given(cells=grids)
def test_inflation_idempotent(cells):
    once = inflate_cells(cells, 0.05, 0.2, 0.5)
    np.testing.assert_array_equal(inflate_cells(once, 0.05, 0.2, 0.5), once)


@settings(max_examples=60, deadline=None)
@given(cells=grids)
def test_inflation_non_increasing_with_distance(cells):
    if not (cells == LETHAL).any():
        return
    out = inflate_cells(cells, 0.05, 0.1, 0.5)
    dist = ndimage.distance_transform_edt(cells != LETHAL)
    order = np.argsort(dist.ravel(), kind="stable")
    d, c = dist.ravel()[order], out.ravel()[order].astype(int)
    # comparing across strictly larger distances only
    for i in range(len(d)):
        farther = d > d[i] + 1e-12
        assert np.all(c[farther] <= c[i])


def test_decay_radius_below_robot_radius_rejected():
    with pytest.raises(ValueError):
        inflate_cells(np.zeros((3, 3), dtype=np.uint8), 0.1, 0.3, 0.2)


# --- polar image -----------------------------------------------------------------


def test_dead_ahead_obstacle_in_middle_rows_column_32():
    local = make_local(121, 0.05)
    local.cells[local_cell(local, 2.0, 0.0)] = LETHAL
    img = to_polar(local, Pose(1.0, 0.0), 64, 64, r_max=4.0)
    rows, cols = np.nonzero(img.obstacle)
    assert set(rows.tolist()) <= {31, 32}
    assert set(cols.tolist()) == {32}
    x, y = polar_pixel_to_world(img, local.center, rows[0], cols[0])
    assert math.hypot(x - 2.0, y) <= polar_cell_diagonal(img, cols[0])


def test_goal_behind_wraps_across_boundary_rows():
    local = make_local(121, 0.05)
    img = to_polar(local, Pose(-2.0, 0.0), 64, 64)
    assert img.goal[0].any() and img.goal[-1].any()
    assert not img.goal[16:48].any()


def test_single_goal_blob():
    local = make_local(121, 0.05, center=Pose(0, 0, 0.4))
    img = to_polar(local, Pose(1.2, 0.9), 64, 64)
    _, count = ndimage.label(img.goal > 0)
    assert count == 1
    assert img.goal.max() == 1.0


def test_goal_outside_window_raises():
    with pytest.raises(GoalOutsideWindow):
        to_polar(make_local(121, 0.05), Pose(5.0, 0.0))


def test_unknown_cells_not_in_obstacle_channel():
    local = make_local(41, 0.05)
    local.cells[:5, :] = UNKNOWN
    img = to_polar(local, None)
    assert not img.obstacle.any()


def random_scene(rng, n=121, res=0.05, blobs=6):
    local = make_local(n, res, center=Pose(0.0, 0.0, rng.uniform(-math.pi, math.pi)))
    for _ in range(blobs):
        r, c = rng.integers(0, n, size=2)
        local.cells[max(r - 2, 0) : r + 3, max(c - 2, 0) : c + 3] = LETHAL
    return inflate(local, 0.2, 0.5)


@pytest.mark.parametrize("seed", range(10))
def test_rotation_shifts_rows_cyclically(seed):
    rng = np.random.default_rng(seed)
    base = random_scene(rng)
    delta = rng.uniform(-math.pi, math.pi)
    turned = base.with_cells(base.cells)
    turned.center = Pose(base.center.x, base.center.y, base.center.theta + delta)
    a = to_polar(base, None).obstacle > 0
    b = to_polar(turned, None).obstacle > 0
    shift = delta / (2 * math.pi) * a.shape[0]
    k = int(round(shift))
    # every pixel of the rotated image has a source pixel within one row of the ideal shift
    near = np.zeros_like(a)
    for s in (k - 1, k, k + 1):
        near |= np.roll(a, -s, axis=0)
    assert np.all(near[b])


@pytest.mark.parametrize("seed", range(10))
def test_polar_pixels_map_back_near_occupied_cells(seed):
    rng = np.random.default_rng(100 + seed)
    local = random_scene(rng)
    img = to_polar(local, None)
    occ = np.argwhere((local.cells > 0) & (local.cells != UNKNOWN))
    ox, oy = local.grid.cell_center(occ[:, 0], occ[:, 1])
    for i, j in np.argwhere(img.obstacle > 0):
        x, y = polar_pixel_to_world(img, local.center, i, j)
        assert np.min(np.hypot(ox - x, oy - y)) <= polar_cell_diagonal(img, j)


# --- kernel penalty ----------------------------------------------------------------


def test_kernel_empty_is_zero():
    assert kernel_penalty(make_local(61, 0.05)) == 0.0


def test_kernel_peak_at_robot_cell():
    local = make_local(61, 0.05)
    local.cells[30, 30] = LETHAL
    assert kernel_penalty(local, 1.0, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_kernel_truncated_beyond_radius():
    local = make_local(61, 0.05)
    local.cells[30, 30 + 21] = LETHAL  # 1.05 m east
    local.cells[0, 0] = UNKNOWN
    assert kernel_penalty(local, 1.0, 0.5) == 0.0


def test_kernel_gaussian_weight():
    local = make_local(61, 0.05)
    local.cells[30, 40] = LETHAL  # 0.5 m east
    assert kernel_penalty(local, 1.0, 0.5) == pytest.approx(math.exp(-0.5), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(cells=st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 254)), min_size=1, max_size=20))
def test_kernel_monotone_in_occupied_cells(cells):
    local = make_local(41, 0.05)
    prev = kernel_penalty(local)
    for r, c, v in cells:
        local.cells[r, c] = max(local.cells[r, c], v)
        now = kernel_penalty(local)
        assert now >= prev
        prev = now


# --- serialisation -----------------------------------------------------------------


def test_pgm_round_trip(tmp_path):
    local = make_local(121, 0.05)
    local.cells[local_cell(local, 1.0, 0.5)] = LETHAL
    img = to_polar(inflate(local, 0.2, 0.7), Pose(1.5, -0.5))
    obs_path, goal_path = write_pgm(img, tmp_path / "state")
    np.testing.assert_array_equal(read_pgm(obs_path), np.rint(img.obstacle * 255).astype(np.uint8))
    np.testing.assert_array_equal(read_pgm(goal_path), np.rint(img.goal * 255).astype(np.uint8))


@given(hnp.arrays(np.uint8, st.tuples(st.integers(1, 8), st.integers(1, 20)), elements=st.sampled_from([0, 7, 253, 254, 255])))
def test_rle_round_trip(cells):
    rows = rle_encode_rows(cells)
    np.testing.assert_array_equal(rle_decode_rows(rows, cells.shape[1]), cells)


def test_rle_rejects_bad_width():
    with pytest.raises(ValueError):
        rle_decode_rows([[0, 3]], 4)
