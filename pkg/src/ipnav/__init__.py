"""Trainable LiDAR input preprocessing for SAC mapless navigation, with a
built-in 2D occupancy-grid simulator and experiment harness."""

from pathlib import Path

__version__ = "0.1.0"

MAPS_DIR = Path(__file__).parent / "maps"


def builtin_map_path(name: str) -> Path:
    """Path of a bundled map ('train_boxes', 'test_boxes', 'empty', ...)."""
    p = MAPS_DIR / f"{name}.map"
    if not p.is_file():
        available = sorted(q.stem for q in MAPS_DIR.glob("*.map"))
        raise ValueError(f"unknown bundled map {name!r}; available: {available}")
    return p
