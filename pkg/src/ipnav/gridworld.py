"""Deterministic 2D world: occupancy grid, differential-drive kinematics,
beam raycasting and footprint collision checks.

Grid convention: ``cells[iy, ix]`` covers the world rectangle
[origin_x + ix*res, origin_x + (ix+1)*res) x [origin_y + iy*res, origin_y + (iy+1)*res),
True = occupied. The area outside the grid is treated as occupied, so rays
stop at the map boundary and a robot can never leave the map.

Map files are plain text: three header lines (``resolution <m>``,
``width <cells>``, ``height <cells>``) followed by ``height`` rows of
``.`` (free) / ``#`` (occupied), listed top row first. The loader flips the
rows so that row index 0 is the southmost (lowest-y) row.

All operations here are pure with respect to their inputs; a grid is
immutable after construction and safe for concurrent read-only use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Renormalize an angle into (-pi, pi]."""
    r = theta % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class OccupancyGrid:
    width_cells: int
    height_cells: int
    resolution: float
    cells: np.ndarray  # bool, shape (height_cells, width_cells)
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        cells = np.ascontiguousarray(np.asarray(self.cells, dtype=bool))
        if cells.shape != (self.height_cells, self.width_cells):
            raise ValueError(
                f"cell raster shape {cells.shape} does not match "
                f"({self.height_cells}, {self.width_cells})"
            )
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def world_width(self) -> float:
        return self.width_cells * self.resolution

    @property
    def world_height(self) -> float:
        return self.height_cells * self.resolution

    @property
    def diagonal(self) -> float:
        return math.hypot(self.world_width, self.world_height)

    def contains(self, x: float, y: float) -> bool:
        x0, y0 = self.origin
        return x0 <= x < x0 + self.world_width and y0 <= y < y0 + self.world_height

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """(iy, ix) of the cell containing the world point; no bounds check."""
        x0, y0 = self.origin
        return (
            int(math.floor((y - y0) / self.resolution)),
            int(math.floor((x - x0) / self.resolution)),
        )

    def free_at(self, x: float, y: float) -> bool:
        """True iff the point lies inside the grid in an unoccupied cell."""
        if not self.contains(x, y):
            return False
        iy, ix = self.cell_index(x, y)
        return not self.cells[iy, ix]

    @classmethod
    def from_text(cls, text: str, origin: tuple[float, float] = (0.0, 0.0)) -> "OccupancyGrid":
        lines = [ln for ln in text.splitlines() if ln.strip() != ""]
        if len(lines) < 4:
            raise ValueError("map text too short: expected 3 header lines plus rows")
        header = {}
        for ln in lines[:3]:
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"bad header line: {ln!r}")
            header[parts[0]] = parts[1]
        try:
            res = float(header["resolution"])
            width = int(header["width"])
            height = int(header["height"])
        except (KeyError, ValueError) as e:
            raise ValueError(f"bad map header: {e}") from e
        rows = lines[3:]
        if len(rows) != height:
            raise ValueError(f"expected {height} map rows, found {len(rows)}")
        raster = np.zeros((height, width), dtype=bool)
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"ragged map row {i}: length {len(row)} != width {width}")
            bad = set(row) - {".", "#"}
            if bad:
                raise ValueError(f"unknown map characters {sorted(bad)} in row {i}")
            # File lists the top (highest-y) row first.
            raster[height - 1 - i] = np.frombuffer(row.encode(), dtype="S1") == b"#"
        return cls(width, height, res, raster, origin)

    @classmethod
    def from_file(cls, path: str | Path) -> "OccupancyGrid":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        out = [
            f"resolution {self.resolution}",
            f"width {self.width_cells}",
            f"height {self.height_cells}",
        ]
        for iy in range(self.height_cells - 1, -1, -1):
            out.append("".join("#" if v else "." for v in self.cells[iy]))
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class Circle:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be > 0")


@dataclass(frozen=True)
class Rectangle:
    """Axis 'length' points along robot +x (forward), 'width' along +y."""

    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("rectangle dimensions must be > 0")


@dataclass(frozen=True)
class RobotBody:
    shape: Circle | Rectangle
    lidar_offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        mx, my = self.lidar_offset
        if isinstance(self.shape, Circle):
            inside = math.hypot(mx, my) < self.shape.radius
        else:
            inside = abs(mx) < self.shape.length / 2 and abs(my) < self.shape.width / 2
        if not inside:
            raise ValueError("lidar mount must lie strictly inside the footprint")

    @property
    def bounding_radius(self) -> float:
        if isinstance(self.shape, Circle):
            return self.shape.radius
        return math.hypot(self.shape.length / 2, self.shape.width / 2)

    def lidar_world_position(self, pose: Pose) -> tuple[float, float]:
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        mx, my = self.lidar_offset
        return pose.x + c * mx - s * my, pose.y + s * mx + c * my


@dataclass(frozen=True)
class LidarSpec:
    fov: float  # radians
    n_beams: int
    max_range: float
    _angles: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_beams < 2:
            raise ValueError("n_beams must be >= 2")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")
        if not 0 < self.fov <= TWO_PI:
            raise ValueError("fov must be in (0, 2*pi]")
        angles = np.linspace(-self.fov / 2, self.fov / 2, self.n_beams)
        angles.setflags(write=False)
        object.__setattr__(self, "_angles", angles)

    @property
    def beam_angles(self) -> np.ndarray:
        """Beam directions in the robot frame, strictly increasing, centered on heading."""
        return self._angles


@dataclass(frozen=True)
class LidarFrame:
    """One sweep of beam distances with per-beam measuring bounds."""

    distances: np.ndarray  # meters, length n_beams
    d_min: np.ndarray  # per-beam minimum returnable distance
    d_max: float

    def __post_init__(self):
        if self.distances.shape != self.d_min.shape:
            raise ValueError("distances and d_min must have equal length")


@dataclass(frozen=True)
class DiffDriveState:
    pose: Pose
    v: float = 0.0
    omega: float = 0.0
    v_limits: tuple[float, float] = (-0.5, 0.5)  # (min, max) linear velocity
    omega_max: float = math.pi / 2


def raycast(grid: OccupancyGrid, origin: tuple[float, float], angle: float, max_range: float) -> float:
    """Distance along the ray to the first occupied cell boundary, capped at max_range.

    The map boundary counts as occupied. Traversal is grid-exact DDA.
    Raises ValueError("invalid ray origin") if the origin is outside the grid
    or inside an occupied cell.
    """
    ox, oy = origin
    if not grid.free_at(ox, oy):
        raise ValueError("invalid ray origin")
    x0, y0 = grid.origin
    return float(kernels.raycast(grid.cells, x0, y0, grid.resolution, ox, oy, float(angle), float(max_range)))


def footprint_min_range(body: RobotBody, beam_angle: float) -> float:
    """Distance from the lidar mount to the robot's own footprint boundary
    along the beam direction (robot frame). Strictly positive."""
    ux, uy = math.cos(beam_angle), math.sin(beam_angle)
    mx, my = body.lidar_offset
    if isinstance(body.shape, Circle):
        r = body.shape.radius
        mu = mx * ux + my * uy
        return -mu + math.sqrt(mu * mu + r * r - (mx * mx + my * my))
    hl, hw = body.shape.length / 2, body.shape.width / 2
    tx = ((hl if ux > 0 else -hl) - mx) / ux if ux != 0.0 else math.inf
    ty = ((hw if uy > 0 else -hw) - my) / uy if uy != 0.0 else math.inf
    return min(tx, ty)


def scan(
    grid: OccupancyGrid,
    body_pose: Pose,
    body: RobotBody,
    spec: LidarSpec,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> LidarFrame:
    """One raycast per beam from the lidar mount point.

    Distances are clamped to [d_min_i, max_range] where d_min_i comes from
    the footprint geometry. Beams are ideal by default; ``noise_std > 0``
    adds Gaussian range noise before clamping (off in every bundled config).
    """
    lx, ly = body.lidar_world_position(body_pose)
    if not grid.free_at(lx, ly):
        raise ValueError("invalid ray origin")
    angles = body_pose.theta + spec.beam_angles
    x0, y0 = grid.origin
    dists = kernels.scan(grid.cells, x0, y0, grid.resolution, lx, ly, angles, float(spec.max_range))
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        dists = dists + rng.normal(0.0, noise_std, dists.shape)
    d_min = np.array([footprint_min_range(body, a) for a in spec.beam_angles])
    dists = np.clip(dists, d_min, spec.max_range)
    return LidarFrame(dists, d_min, float(spec.max_range))


def step_kinematics(state: DiffDriveState, cmd: tuple[float, float], dt: float) -> DiffDriveState:
    """Unicycle update with the command clamped to the state's velocity limits."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v = min(max(cmd[0], state.v_limits[0]), state.v_limits[1])
    w = min(max(cmd[1], -state.omega_max), state.omega_max)
    p = state.pose
    return DiffDriveState(
        pose=Pose(
            p.x + v * math.cos(p.theta) * dt,
            p.y + v * math.sin(p.theta) * dt,
            wrap_angle(p.theta + w * dt),
        ),
        v=v,
        omega=w,
        v_limits=state.v_limits,
        omega_max=state.omega_max,
    )


def collision_check(grid: OccupancyGrid, pose: Pose, body: RobotBody) -> bool:
    """True iff any occupied cell (or the map exterior) strictly overlaps the
    robot footprint at the given pose."""
    x0, y0 = grid.origin
    if isinstance(body.shape, Circle):
        return bool(
            kernels.disk_collides(
                grid.cells, x0, y0, grid.resolution, pose.x, pose.y, body.shape.radius
            )
        )
    return bool(
        kernels.rect_collides(
            grid.cells,
            x0,
            y0,
            grid.resolution,
            pose.x,
            pose.y,
            math.cos(pose.theta),
            math.sin(pose.theta),
            body.shape.length / 2,
            body.shape.width / 2,
        )
    )
