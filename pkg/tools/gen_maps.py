"""Regenerate the bundled desk-scale maps (8x8 m rooms at 5 cm resolution).

Run from the repo root:  python3 tools/gen_maps.py
"""

from pathlib import Path

import numpy as np

from ipnav.gridworld import OccupancyGrid

RES = 0.05
SIZE = 160  # 8 m


def room(boxes: list[tuple[float, float, float, float]]) -> OccupancyGrid:
    cells = np.zeros((SIZE, SIZE), dtype=bool)
    cells[0, :] = cells[-1, :] = True
    cells[:, 0] = cells[:, -1] = True
    for x0, y0, x1, y1 in boxes:
        ix0, ix1 = int(round(x0 / RES)), int(round(x1 / RES))
        iy0, iy1 = int(round(y0 / RES)), int(round(y1 / RES))
        cells[iy0:iy1, ix0:ix1] = True
    return OccupancyGrid(SIZE, SIZE, RES, cells)


TRAIN_BOXES = [
    (1.2, 1.2, 1.8, 1.8),
    (3.4, 0.8, 4.0, 1.6),
    (5.8, 1.4, 6.6, 2.0),
    (1.0, 3.6, 1.6, 4.4),
    (3.6, 3.4, 4.4, 4.2),
    (6.2, 3.8, 6.8, 4.6),
    (1.8, 5.8, 2.6, 6.4),
    (4.6, 5.6, 5.2, 6.4),
    (6.6, 6.2, 7.2, 6.8),
]

TEST_BOXES = [
    (2.0, 2.0, 2.8, 2.6),
    (5.2, 1.2, 5.8, 2.0),
    (1.2, 5.2, 2.0, 5.8),
    (4.0, 4.4, 4.8, 5.2),
    (6.4, 4.0, 7.0, 4.8),
    (3.2, 6.4, 4.0, 7.0),
]


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "ipnav" / "maps"
    out.mkdir(parents=True, exist_ok=True)
    for name, boxes in (("train_boxes", TRAIN_BOXES), ("test_boxes", TEST_BOXES), ("empty", [])):
        (out / f"{name}.map").write_text(room(boxes).to_text())
        print(f"wrote {out / f'{name}.map'}")


if __name__ == "__main__":
    main()
