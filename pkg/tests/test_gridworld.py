"""Simulator geometry tests: exact examples, independent brute-force oracles
for raycasting and collision, and the documented invariants."""

import math

import numpy as np
import pytest

from ipnav.gridworld import (
    Circle,
    DiffDriveState,
    LidarSpec,
    OccupancyGrid,
    Pose,
    Rectangle,
    RobotBody,
    collision_check,
    footprint_min_range,
    raycast,
    scan,
    step_kinematics,
    wrap_angle,
)


def empty_grid(size_m=10.0, res=1.0):
    n = int(round(size_m / res))
    return OccupancyGrid(n, n, res, np.zeros((n, n), dtype=bool))


def random_grid(rng, n_cells=40, res=0.1, density=0.12):
    cells = rng.random((n_cells, n_cells)) < density
    return OccupancyGrid(n_cells, n_cells, res, cells)


# ---------------------------------------------------------------------------
# oracles


def ray_march_oracle(grid, origin, angle, max_range, step):
    """March the ray in fixed steps; first sample inside an occupied cell or
    outside the grid gives the distance. Independent of the DDA path."""
    ts = np.arange(step, max_range + step, step)
    xs = origin[0] + math.cos(angle) * ts
    ys = origin[1] + math.sin(angle) * ts
    x0, y0 = grid.origin
    ix = np.floor((xs - x0) / grid.resolution).astype(int)
    iy = np.floor((ys - y0) / grid.resolution).astype(int)
    inside = (ix >= 0) & (ix < grid.width_cells) & (iy >= 0) & (iy < grid.height_cells)
    hit = ~inside
    hit[inside] |= grid.cells[iy[inside], ix[inside]]
    idx = np.argmax(hit) if hit.any() else None
    if idx is None:
        return max_range
    return min(float(ts[idx]), max_range)


def sample_ray_case(rng):
    """Random (grid, origin, angle), origin guaranteed free; knife-edge rays
    (where two marching resolutions disagree) are resampled because a
    fixed-step oracle cannot see grazing contacts."""
    while True:
        grid = random_grid(rng)
        span = grid.world_width
        for _ in range(50):
            ox, oy = rng.uniform(0.3, span - 0.3, 2)
            if grid.free_at(ox, oy):
                break
        else:
            continue
        angle = rng.uniform(-math.pi, math.pi)
        max_range = rng.uniform(1.0, 8.0)
        res = grid.resolution
        coarse = ray_march_oracle(grid, (ox, oy), angle, max_range, res / 10)
        fine = ray_march_oracle(grid, (ox, oy), angle, max_range, res / 2000)
        if abs(coarse - fine) > res / 2:
            continue  # corner graze: chord too short for a stepping oracle
        return grid, (ox, oy), angle, max_range, coarse


def footprint_contains(body, pose, px, py):
    dx, dy = px - pose.x, py - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    lx, ly = c * dx + s * dy, -s * dx + c * dy
    if isinstance(body.shape, Circle):
        return lx * lx + ly * ly < body.shape.radius**2
    return abs(lx) < body.shape.length / 2 and abs(ly) < body.shape.width / 2


def collision_oracle(grid, pose, body, step):
    """Dense lattice sampling over the footprint bounding box: any sampled
    point inside the footprint that lies in an occupied cell or outside the
    grid is a collision."""
    r = body.bounding_radius
    xs = np.arange(pose.x - r, pose.x + r + step, step)
    ys = np.arange(pose.y - r, pose.y + r + step, step)
    px, py = np.meshgrid(xs, ys)
    px, py = px.ravel(), py.ravel()
    keep = np.array([footprint_contains(body, pose, x, y) for x, y in zip(px, py)])
    px, py = px[keep], py[keep]
    x0, y0 = grid.origin
    ix = np.floor((px - x0) / grid.resolution).astype(int)
    iy = np.floor((py - y0) / grid.resolution).astype(int)
    inside = (ix >= 0) & (ix < grid.width_cells) & (iy >= 0) & (iy < grid.height_cells)
    if np.any(~inside):
        return True
    return bool(grid.cells[iy, ix].any())


def disk_penetration_margin(grid, pose, radius):
    """Signed clearance of a disk against occupied cells and the boundary:
    negative means overlap by |margin|. Used only to reject knife-edge test
    cases that a finite sampling oracle cannot decide."""
    x0, y0 = grid.origin
    res = grid.resolution
    dists = [
        pose.x - x0,
        x0 + grid.world_width - pose.x,
        pose.y - y0,
        y0 + grid.world_height - pose.y,
    ]
    occ = np.argwhere(grid.cells)
    if occ.size:
        cx0 = x0 + occ[:, 1] * res
        cy0 = y0 + occ[:, 0] * res
        qx = np.clip(pose.x, cx0, cx0 + res)
        qy = np.clip(pose.y, cy0, cy0 + res)
        dists.append(float(np.min(np.hypot(pose.x - qx, pose.y - qy))))
    return min(dists) - radius


def rect_margin(grid, pose, rect):
    """Conservative signed separation of an oriented box vs occupied cells
    and boundary, from the separating-axis gaps."""
    x0, y0 = grid.origin
    res = grid.resolution
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    hl, hw = rect.length / 2, rect.width / 2
    ext_x = abs(hl * c) + abs(hw * s)
    ext_y = abs(hl * s) + abs(hw * c)
    margins = [
        (pose.x - ext_x) - x0,
        (x0 + grid.world_width) - (pose.x + ext_x),
        (pose.y - ext_y) - y0,
        (y0 + grid.world_height) - (pose.y + ext_y),
    ]
    half_cell = res / 2
    cell_on_axis = half_cell * (abs(c) + abs(s))
    for iy, ix in np.argwhere(grid.cells):
        ccx = x0 + (ix + 0.5) * res
        ccy = y0 + (iy + 0.5) * res
        dx, dy = ccx - pose.x, ccy - pose.y
        gaps = (
            abs(dx) - (half_cell + ext_x),
            abs(dy) - (half_cell + ext_y),
            abs(dx * c + dy * s) - (hl + cell_on_axis),
            abs(-dx * s + dy * c) - (hw + cell_on_axis),
        )
        margins.append(max(gaps))
    return min(margins)


# ---------------------------------------------------------------------------
# raycast


class TestRaycast:
    def test_empty_grid_boundary_counts_as_wall(self):
        g = empty_grid(10.0)
        assert raycast(g, (5.0, 5.0), 0.0, 30.0) == pytest.approx(5.0)
        assert raycast(g, (5.0, 5.0), math.pi / 2, 30.0) == pytest.approx(5.0)

    def test_axis_aligned_wall(self):
        cells = np.zeros((10, 10), dtype=bool)
        cells[:, 3] = True  # column covering x in [3, 4)
        g = OccupancyGrid(10, 10, 1.0, cells)
        assert raycast(g, (1.0, 1.0), 0.0, 30.0) == pytest.approx(2.0)

    def test_capped_by_max_range(self):
        g = empty_grid(10.0)
        assert raycast(g, (5.0, 5.0), 0.0, 2.5) == 2.5

    def test_invalid_origin(self):
        g = empty_grid(10.0)
        with pytest.raises(ValueError, match="invalid ray origin"):
            raycast(g, (11.0, 5.0), 0.0, 30.0)
        cells = np.zeros((10, 10), dtype=bool)
        cells[5, 5] = True
        g2 = OccupancyGrid(10, 10, 1.0, cells)
        with pytest.raises(ValueError, match="invalid ray origin"):
            raycast(g2, (5.5, 5.5), 0.0, 30.0)

    def test_matches_marching_oracle(self):
        """1000 random (grid, origin, angle) triples within resolution/2."""
        rng = np.random.default_rng(42)
        for _ in range(1000):
            grid, origin, angle, max_range, expected = sample_ray_case(rng)
            got = raycast(grid, origin, angle, max_range)
            assert abs(got - expected) <= grid.resolution / 2

    def test_monotone_in_max_range(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            grid, origin, angle, max_range, _ = sample_ray_case(rng)
            d1 = raycast(grid, origin, angle, max_range * 0.5)
            d2 = raycast(grid, origin, angle, max_range)
            assert d1 <= d2 + 1e-12


# ---------------------------------------------------------------------------
# scan and footprint geometry


class TestScan:
    def test_empty_surroundings_hits_boundary(self):
        g = empty_grid(10.0)
        body = RobotBody(Circle(0.2))
        spec = LidarSpec(2 * math.pi, 8, 30.0)
        frame = scan(g, Pose(5.0, 5.0, 0.0), body, spec)
        for a, d in zip(spec.beam_angles, frame.distances):
            assert d == pytest.approx(raycast(g, (5.0, 5.0), a, 30.0))

    def test_obstacle_ahead_only_affects_forward_beam(self):
        cells = np.zeros((100, 100), dtype=bool)
        cells[48:52, 60:62] = True  # block ~1m ahead of (5, 5) at 0.1 res
        g = OccupancyGrid(100, 100, 0.1, cells)
        body = RobotBody(Circle(0.2))
        spec = LidarSpec(2 * math.pi, 5, 30.0)  # beams at -pi, -pi/2, 0, pi/2, pi
        frame = scan(g, Pose(5.0, 5.0, 0.0), body, spec)
        assert frame.distances[2] == pytest.approx(1.0, abs=0.06)  # forward
        assert frame.distances[0] == pytest.approx(5.0, abs=0.06)  # rear

    def test_beams_match_raycast_clamped(self):
        rng = np.random.default_rng(9)
        body = RobotBody(Circle(0.15))
        spec = LidarSpec(math.radians(270), 12, 4.0)
        for _ in range(30):
            grid = random_grid(rng, n_cells=50, res=0.1, density=0.08)
            for _ in range(100):
                pose = Pose(rng.uniform(1, 4), rng.uniform(1, 4), rng.uniform(-math.pi, math.pi))
                if grid.free_at(pose.x, pose.y):
                    break
            frame = scan(grid, pose, body, spec)
            for a, d, dmin in zip(spec.beam_angles, frame.distances, frame.d_min):
                expected = raycast(grid, (pose.x, pose.y), pose.theta + a, 4.0)
                assert d == pytest.approx(min(max(expected, dmin), 4.0))

    def test_bounds_carried(self):
        g = empty_grid(10.0)
        body = RobotBody(Circle(0.2))
        spec = LidarSpec(math.pi, 6, 30.0)
        frame = scan(g, Pose(5, 5, 0), body, spec)
        assert frame.d_max == 30.0
        np.testing.assert_allclose(frame.d_min, 0.2)


class TestFootprintMinRange:
    def test_circle_centered_is_radius_for_all_angles(self):
        body = RobotBody(Circle(0.2))
        for a in np.linspace(-math.pi, math.pi, 37):
            assert footprint_min_range(body, a) == 0.2

    def test_rectangle_forward_beam(self):
        body = RobotBody(Rectangle(0.455, 0.381), lidar_offset=(0.1, 0.0))
        assert footprint_min_range(body, 0.0) == pytest.approx(0.455 / 2 - 0.1)

    def test_rectangle_perpendicular_beam(self):
        body = RobotBody(Rectangle(0.455, 0.381), lidar_offset=(0.1, 0.0))
        assert footprint_min_range(body, math.pi / 2) == pytest.approx(0.381 / 2)

    def test_rectangle_matches_bisection_oracle(self):
        """Boundary distance agrees with bisection on point-in-rectangle."""
        rng = np.random.default_rng(5)
        body = RobotBody(Rectangle(0.455, 0.381), lidar_offset=(0.1, 0.05))

        def inside(t, angle):
            px = 0.1 + t * math.cos(angle)
            py = 0.05 + t * math.sin(angle)
            return abs(px) < 0.455 / 2 and abs(py) < 0.381 / 2

        for _ in range(100):
            angle = rng.uniform(-math.pi, math.pi)
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = (lo + hi) / 2
                if inside(mid, angle):
                    lo = mid
                else:
                    hi = mid
            assert footprint_min_range(body, angle) == pytest.approx(lo, abs=1e-9)

    def test_strictly_positive(self):
        body = RobotBody(Rectangle(0.455, 0.381), lidar_offset=(0.2, -0.15))
        for a in np.linspace(-math.pi, math.pi, 100):
            assert footprint_min_range(body, a) > 0

    def test_offcenter_circle_mount(self):
        body = RobotBody(Circle(0.2), lidar_offset=(0.1, 0.0))
        assert footprint_min_range(body, 0.0) == pytest.approx(0.1)
        assert footprint_min_range(body, math.pi) == pytest.approx(0.3)


# ---------------------------------------------------------------------------
# kinematics


class TestKinematics:
    def test_straight_drive(self):
        st = DiffDriveState(Pose(0, 0, 0), v_limits=(0.0, 0.5))
        out = step_kinematics(st, (0.5, 0.0), 0.2)
        assert (out.pose.x, out.pose.y, out.pose.theta) == pytest.approx((0.1, 0.0, 0.0))

    def test_turn_in_place(self):
        st = DiffDriveState(Pose(1, 2, 0))
        out = step_kinematics(st, (0.0, math.pi / 2), 0.2)
        assert out.pose.theta == pytest.approx(math.pi / 10)
        assert (out.pose.x, out.pose.y) == (1, 2)

    def test_command_clamped(self):
        st = DiffDriveState(Pose(0, 0, 0), v_limits=(0.0, 0.5))
        out = step_kinematics(st, (1.0, 0.0), 0.2)
        assert out.v == 0.5
        assert out.pose.x == pytest.approx(0.1)

    def test_zero_command_is_identity_on_pose(self):
        st = DiffDriveState(Pose(0.37, -1.2, 2.1))
        out = step_kinematics(st, (0.0, 0.0), 0.2)
        assert (out.pose.x, out.pose.y, out.pose.theta) == (st.pose.x, st.pose.y, st.pose.theta)

    def test_theta_renormalized(self):
        st = DiffDriveState(Pose(0, 0, 3.0), omega_max=math.pi)
        out = step_kinematics(st, (0.0, math.pi), 0.2)
        assert -math.pi < out.pose.theta <= math.pi

    def test_wrap_angle_half_open_interval(self):
        assert wrap_angle(math.pi) == math.pi
        assert wrap_angle(-math.pi) == math.pi
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


# ---------------------------------------------------------------------------
# collision


class TestCollision:
    def test_clear_circle(self):
        cells = np.zeros((100, 100), dtype=bool)
        cells[50:60, 70:80] = True
        g = OccupancyGrid(100, 100, 0.1, cells)
        assert not collision_check(g, Pose(5.0, 5.0, 0), RobotBody(Circle(0.2)))

    def test_near_cell_circle(self):
        cells = np.zeros((100, 100), dtype=bool)
        cells[50, 55] = True  # cell [5.5, 5.6) x [5.0, 5.1)
        g = OccupancyGrid(100, 100, 0.1, cells)
        assert collision_check(g, Pose(5.45, 5.05, 0), RobotBody(Circle(0.2)))

    def test_boundary_counts_as_occupied(self):
        g = empty_grid(10.0, res=0.1)
        assert collision_check(g, Pose(0.1, 5.0, 0), RobotBody(Circle(0.2)))
        assert not collision_check(g, Pose(0.3, 5.0, 0), RobotBody(Circle(0.2)))

    @pytest.mark.parametrize("shape", ["circle", "rect"])
    def test_matches_dense_sampling_oracle(self, shape):
        """Randomized poses agree exactly with the sampling oracle; contact
        cases shallower than the sampling lattice are resampled."""
        rng = np.random.default_rng(2024 if shape == "circle" else 2025)
        body = RobotBody(Circle(0.2)) if shape == "circle" else RobotBody(Rectangle(0.45, 0.38))
        checked = 0
        while checked < 1000:
            grid = random_grid(rng, n_cells=30, res=0.1, density=0.08)
            pose = Pose(
                rng.uniform(0.1, 2.9), rng.uniform(0.1, 2.9), rng.uniform(-math.pi, math.pi)
            )
            if shape == "circle":
                margin = disk_penetration_margin(grid, pose, 0.2)
            else:
                margin = rect_margin(grid, pose, body.shape)
            if abs(margin) < grid.resolution / 2:
                continue
            got = collision_check(grid, pose, body)
            expected = collision_oracle(grid, pose, body, grid.resolution / 10)
            assert got == expected, f"{shape} mismatch at {pose} (margin {margin:.4f})"
            checked += 1

    def test_monotone_in_obstacles(self):
        """Adding occupied cells never turns a collision into a miss."""
        rng = np.random.default_rng(77)
        body = RobotBody(Circle(0.2))
        for _ in range(200):
            grid = random_grid(rng, n_cells=30, res=0.1, density=0.05)
            pose = Pose(rng.uniform(0.3, 2.7), rng.uniform(0.3, 2.7), 0.0)
            before = collision_check(grid, pose, body)
            extra = grid.cells | (rng.random(grid.cells.shape) < 0.05)
            bigger = OccupancyGrid(30, 30, 0.1, extra)
            after = collision_check(bigger, pose, body)
            assert not (before and not after)


# ---------------------------------------------------------------------------
# map file format


class TestMapFormat:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        cells = rng.random((12, 7)) < 0.3
        g = OccupancyGrid(7, 12, 0.25, cells)
        g2 = OccupancyGrid.from_text(g.to_text())
        assert np.array_equal(g.cells, g2.cells)
        assert g2.resolution == 0.25

    def test_rejects_ragged_rows(self):
        text = "resolution 0.5\nwidth 3\nheight 2\n...\n.."
        with pytest.raises(ValueError, match="ragged"):
            OccupancyGrid.from_text(text)

    def test_rejects_bad_chars(self):
        text = "resolution 0.5\nwidth 3\nheight 1\n.x."
        with pytest.raises(ValueError, match="unknown map characters"):
            OccupancyGrid.from_text(text)

    def test_rejects_wrong_row_count(self):
        text = "resolution 0.5\nwidth 3\nheight 3\n...\n..."
        with pytest.raises(ValueError, match="rows"):
            OccupancyGrid.from_text(text)

    def test_first_text_row_is_north(self):
        text = "resolution 1.0\nwidth 2\nheight 2\n##\n.."
        g = OccupancyGrid.from_text(text)
        assert not g.cells[0].any()  # south row free
        assert g.cells[1].all()  # north row occupied
