"""Benchmark the compiled simulator kernels against the pure-Python fallback.

Run:  python3 benchmarks/bench_kernels.py

Times a full 180-beam sweep and the two collision predicates on a bundled
map, compares results for bitwise equality, and prints the speedup. The
fallback is the exact same function body without numba; selecting it for a
whole process works via IPNAV_DISABLE_NUMBA=1.
"""

import math
import time

import numpy as np

from ipnav import builtin_map_path
from ipnav.gridworld import OccupancyGrid
from ipnav import kernels

REPEATS = 200


def timeit(fn, *args, repeats=REPEATS):
    fn(*args)  # warmup / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = fn(*args)
    return (time.perf_counter() - t0) / repeats, out


def main():
    grid = OccupancyGrid.from_file(builtin_map_path("train_boxes"))
    occ = grid.cells
    x0, y0 = grid.origin
    res = grid.resolution
    angles = np.linspace(-0.75 * math.pi, 0.75 * math.pi, 180)
    ox, oy = 4.0, 4.7

    print(f"numba active in this process: {kernels.USING_NUMBA}")
    rows = []

    t_jit, scan_jit = timeit(kernels.scan, occ, x0, y0, res, ox, oy, angles, 30.0)
    t_pure, scan_pure = timeit(kernels.PURE["scan"], occ, x0, y0, res, ox, oy, angles, 30.0, repeats=20)
    assert np.array_equal(scan_jit, scan_pure), "compiled and fallback scans disagree"
    rows.append(("scan (180 beams)", t_pure, t_jit))

    t_jit, a = timeit(kernels.disk_collides, occ, x0, y0, res, 4.0, 4.7, 0.2)
    t_pure, b = timeit(kernels.PURE["disk_collides"], occ, x0, y0, res, 4.0, 4.7, 0.2)
    assert a == b
    rows.append(("disk_collides", t_pure, t_jit))

    ct, st = math.cos(0.6), math.sin(0.6)
    t_jit, a = timeit(kernels.rect_collides, occ, x0, y0, res, 4.0, 4.7, ct, st, 0.23, 0.19)
    t_pure, b = timeit(kernels.PURE["rect_collides"], occ, x0, y0, res, 4.0, 4.7, ct, st, 0.23, 0.19)
    assert a == b
    rows.append(("rect_collides", t_pure, t_jit))

    print(f"{'kernel':<20} {'fallback':>12} {'compiled':>12} {'speedup':>9}")
    for name, tp, tj in rows:
        print(f"{name:<20} {tp * 1e6:>10.1f}us {tj * 1e6:>10.1f}us {tp / tj:>8.1f}x")


if __name__ == "__main__":
    main()
