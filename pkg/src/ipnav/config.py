"""Experiment configuration: YAML schema, validation, and seeded RNG streams.

Every random stream (task sampling, policy noise, dropout, buffer sampling,
weight init, suite generation) derives from one root seed through a named
substream, so changing how one component consumes randomness cannot shift
the others. The fully resolved configuration is echoed into the run
directory for reproducibility.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from .lidar_prep import IpFamily


def rng_stream(root_seed: int, name: str) -> np.random.Generator:
    """Deterministic named substream of the root seed."""
    return np.random.default_rng(np.random.SeedSequence([root_seed, zlib.crc32(name.encode())]))


@dataclass
class RobotConfig:
    shape: str = "circle"  # circle | rectangle
    radius: float = 0.2
    length: float = 0.455
    width: float = 0.381
    lidar_offset: tuple[float, float] = (0.0, 0.0)


@dataclass
class LidarConfig:
    fov_deg: float = 270.0
    n_beams: int = 180
    max_range: float = 30.0


@dataclass
class SacConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    alpha: float = 0.01
    batch_size: int = 100
    buffer_capacity: int = 100_000
    total_steps: int = 30_000
    eval_period: int = 2_500
    random_episodes: int = 100
    tau: float = 0.005
    grad_clip: float = 10.0
    separate_ip_params: bool = False


@dataclass
class EpisodeConfig:
    t_max: int = 200
    dt: float = 0.2
    success_radius: float = 0.3
    v_min: float = 0.0  # 0 forbids reversing; set negative to allow it
    v_max: float = 0.5
    omega_max: float = math.pi / 2
    task_min_separation: float = 1.0


@dataclass
class ExperimentConfig:
    train_map: str = ""
    test_maps: dict[str, str] = field(default_factory=dict)
    robot: RobotConfig = field(default_factory=RobotConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    pool_k: int = 6
    ip_family: str = "ipaprec"
    ip_shared: bool = True
    model: str = "model_3"
    sac: SacConfig = field(default_factory=SacConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    eval_tasks: int = 20
    seed: int = 0
    out_dir: str = "runs/out"

    def validate(self, base: Path | None = None) -> None:
        problems = []
        if not self.train_map:
            problems.append("train_map is required")
        for name, p in self.map_paths(base).items():
            if not Path(p).is_file():
                problems.append(f"map for scenario {name!r} not found: {p}")
        if self.lidar.n_beams % self.pool_k != 0:
            problems.append(
                f"pool_k={self.pool_k} must divide n_beams={self.lidar.n_beams} (m*k == n_beams)"
            )
        try:
            IpFamily(self.ip_family)
        except ValueError:
            problems.append(f"unknown ip_family {self.ip_family!r}")
        if self.robot.shape not in ("circle", "rectangle"):
            problems.append(f"unknown robot shape {self.robot.shape!r}")
        if self.sac.eval_period <= 0 or self.sac.total_steps < 0:
            problems.append("eval_period must be > 0 and total_steps >= 0")
        if self.sac.batch_size <= 0 or self.sac.buffer_capacity <= 0:
            problems.append("batch_size and buffer_capacity must be > 0")
        if self.eval_tasks <= 0:
            problems.append("eval_tasks must be > 0")
        if self.episode.v_min >= self.episode.v_max:
            problems.append("require v_min < v_max")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))

    def map_paths(self, base: Path | None = None) -> dict[str, str]:
        """Scenario name -> map path; the training map is scenario 'train'."""
        base = base or Path(".")

        def resolve(p: str) -> str:
            pp = Path(p)
            return str(pp if pp.is_absolute() else base / pp)

        out = {"train": resolve(self.train_map)}
        for name, p in self.test_maps.items():
            if name == "train":
                raise ValueError("scenario name 'train' is reserved for the training map")
            out[name] = resolve(p)
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def _apply(dc, data: dict, path: str):
    for key, val in data.items():
        if not hasattr(dc, key):
            raise ValueError(f"unknown config key {path}{key}")
        cur = getattr(dc, key)
        if isinstance(cur, (RobotConfig, LidarConfig, SacConfig, EpisodeConfig)):
            if not isinstance(val, dict):
                raise ValueError(f"config key {path}{key} must be a mapping")
            _apply(cur, val, f"{path}{key}.")
        elif key == "lidar_offset":
            setattr(dc, key, (float(val[0]), float(val[1])))
        else:
            setattr(dc, key, type(cur)(val) if cur is not None and not isinstance(val, type(cur)) else val)


def load_config(path: str | Path) -> ExperimentConfig:
    """Load and validate a YAML experiment config. Relative map paths are
    resolved against the config file's directory."""
    path = Path(path)
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ValueError("config file must contain a mapping")
    cfg = ExperimentConfig()
    _apply(cfg, data, "")
    base = path.parent
    cfg.train_map = str(Path(cfg.train_map) if Path(cfg.train_map).is_absolute() else base / cfg.train_map)
    cfg.test_maps = {k: str(Path(v) if Path(v).is_absolute() else base / v) for k, v in cfg.test_maps.items()}
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
