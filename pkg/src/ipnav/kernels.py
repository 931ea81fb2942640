"""Hot numeric kernels: grid raycasting and footprint collision tests.

These inner loops run once per beam per simulation step and dominate
simulator time, so they are compiled with numba when available. Setting
the environment variable ``IPNAV_DISABLE_NUMBA=1`` (before import) selects
the pure-Python/numpy fallback, which executes the exact same function
bodies and therefore produces bitwise-identical results.

Conventions:
- ``occ`` is a 2D bool array of shape (height, width); ``occ[iy, ix]`` covers
  the world rectangle [x0 + ix*res, x0 + (ix+1)*res) x [y0 + iy*res, y0 + (iy+1)*res).
- Everything outside the grid counts as occupied: rays stop at the map
  boundary and footprints poking past it collide.
- Ray traversal is DDA cell walking (no cell along the ray is skipped).
- Collision predicates require strict interior overlap; a footprint exactly
  tangent to an occupied cell does not collide.

``benchmarks/bench_kernels.py`` times the compiled and fallback paths
against each other; the ``PURE`` dict below keeps the uncompiled functions
reachable for that comparison.
"""

import math
import os

import numpy as np

_DISABLE = os.environ.get("IPNAV_DISABLE_NUMBA", "0") not in ("", "0")
try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a hard dep, but keep the fallback honest
    _njit = None

USING_NUMBA = _njit is not None and not _DISABLE


def _raycast(occ, x0, y0, res, ox, oy, angle, max_range):
    # Caller guarantees (ox, oy) lies inside the grid in a free cell.
    h, w = occ.shape
    dx = math.cos(angle)
    dy = math.sin(angle)
    ix = int(math.floor((ox - x0) / res))
    iy = int(math.floor((oy - y0) / res))

    if dx > 0.0:
        step_x = 1
        t_max_x = (x0 + (ix + 1) * res - ox) / dx
        t_delta_x = res / dx
    elif dx < 0.0:
        step_x = -1
        t_max_x = (x0 + ix * res - ox) / dx
        t_delta_x = -res / dx
    else:
        step_x = 0
        t_max_x = math.inf
        t_delta_x = math.inf

    if dy > 0.0:
        step_y = 1
        t_max_y = (y0 + (iy + 1) * res - oy) / dy
        t_delta_y = res / dy
    elif dy < 0.0:
        step_y = -1
        t_max_y = (y0 + iy * res - oy) / dy
        t_delta_y = -res / dy
    else:
        step_y = 0
        t_max_y = math.inf
        t_delta_y = math.inf

    while True:
        if t_max_x <= t_max_y:
            t = t_max_x
            ix += step_x
            t_max_x += t_delta_x
        else:
            t = t_max_y
            iy += step_y
            t_max_y += t_delta_y
        if t >= max_range:
            return max_range
        if ix < 0 or ix >= w or iy < 0 or iy >= h:
            return t  # map boundary acts as a wall
        if occ[iy, ix]:
            return t


def _disk_collides(occ, x0, y0, res, cx, cy, radius):
    h, w = occ.shape
    # Boundary acts as a wall: strict overlap with the outside half-planes.
    if cx - radius < x0 or cx + radius > x0 + w * res:
        return True
    if cy - radius < y0 or cy + radius > y0 + h * res:
        return True
    ix_lo = max(0, int(math.floor((cx - radius - x0) / res)))
    ix_hi = min(w - 1, int(math.floor((cx + radius - x0) / res)))
    iy_lo = max(0, int(math.floor((cy - radius - y0) / res)))
    iy_hi = min(h - 1, int(math.floor((cy + radius - y0) / res)))
    r2 = radius * radius
    for iy in range(iy_lo, iy_hi + 1):
        for ix in range(ix_lo, ix_hi + 1):
            if not occ[iy, ix]:
                continue
            # Closest point of the cell rectangle to the disk center.
            qx = min(max(cx, x0 + ix * res), x0 + (ix + 1) * res)
            qy = min(max(cy, y0 + iy * res), y0 + (iy + 1) * res)
            ddx = cx - qx
            ddy = cy - qy
            if ddx * ddx + ddy * ddy < r2:
                return True
    return False


def _rect_collides(occ, x0, y0, res, cx, cy, cos_t, sin_t, half_l, half_w):
    h, w = occ.shape
    # World-aligned extents of the oriented box.
    ext_x = abs(half_l * cos_t) + abs(half_w * sin_t)
    ext_y = abs(half_l * sin_t) + abs(half_w * cos_t)
    if cx - ext_x < x0 or cx + ext_x > x0 + w * res:
        return True
    if cy - ext_y < y0 or cy + ext_y > y0 + h * res:
        return True
    ix_lo = max(0, int(math.floor((cx - ext_x - x0) / res)))
    ix_hi = min(w - 1, int(math.floor((cx + ext_x - x0) / res)))
    iy_lo = max(0, int(math.floor((cy - ext_y - y0) / res)))
    iy_hi = min(h - 1, int(math.floor((cy + ext_y - y0) / res)))
    half_cell = 0.5 * res
    # Projection radius of the cell onto the box axes is the same for u and v.
    cell_on_axis = half_cell * (abs(cos_t) + abs(sin_t))
    for iy in range(iy_lo, iy_hi + 1):
        for ix in range(ix_lo, ix_hi + 1):
            if not occ[iy, ix]:
                continue
            ccx = x0 + (ix + 0.5) * res
            ccy = y0 + (iy + 0.5) * res
            dx = ccx - cx
            dy = ccy - cy
            # Separating-axis test over the 4 face normals (strict overlap).
            if abs(dx) >= half_cell + ext_x:
                continue
            if abs(dy) >= half_cell + ext_y:
                continue
            if abs(dx * cos_t + dy * sin_t) >= half_l + cell_on_axis:
                continue
            if abs(-dx * sin_t + dy * cos_t) >= half_w + cell_on_axis:
                continue
            return True
    return False


if USING_NUMBA:
    raycast = _njit(cache=True)(_raycast)
    disk_collides = _njit(cache=True)(_disk_collides)
    rect_collides = _njit(cache=True)(_rect_collides)
else:
    raycast = _raycast
    disk_collides = _disk_collides
    rect_collides = _rect_collides


def _scan(occ, x0, y0, res, ox, oy, angles, max_range):
    # Binds the module-level `raycast` (jitted or not) at compile/call time.
    out = np.empty(angles.shape[0], dtype=np.float64)
    for i in range(angles.shape[0]):
        out[i] = raycast(occ, x0, y0, res, ox, oy, angles[i], max_range)
    return out


def _scan_pure(occ, x0, y0, res, ox, oy, angles, max_range):
    out = np.empty(angles.shape[0], dtype=np.float64)
    for i in range(angles.shape[0]):
        out[i] = _raycast(occ, x0, y0, res, ox, oy, angles[i], max_range)
    return out


scan = _njit(cache=True)(_scan) if USING_NUMBA else _scan_pure

PURE = {
    "raycast": _raycast,
    "scan": _scan_pure,
    "disk_collides": _disk_collides,
    "rect_collides": _rect_collides,
}
