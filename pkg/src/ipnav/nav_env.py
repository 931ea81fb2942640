"""The navigation MDP on the grid simulator: observation assembly, reward,
termination, task sampling, and the interaction loop.

Reward per step: +r_success on reaching the goal, r_crash on collision,
otherwise c_dense * (goal distance before - goal distance after). Checks run
in the order collision, success, timeout, so a step that both crashes and
reaches the goal counts as a crash.

Observations expose the physical quantities (preprocessed scan, goal
distance/bearing, velocities); ``vector()`` returns the network input, whose
scan block holds the *raw pooled* distances. The preprocessing mapping is
applied inside the networks so its parameter stays trainable; goal distance
is scaled by the map diagonal and velocities by their bounds, while the scan
scaling is exactly the preprocessing method under test (never applied twice).

Timeout ends an episode but is not a termination signal: the interaction
loop stores d=1 only for success/crash, so the value bootstrap continues
through time-limit truncations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .gridworld import (
    DiffDriveState,
    LidarSpec,
    OccupancyGrid,
    Pose,
    RobotBody,
    collision_check,
    footprint_min_range,
    scan,
    step_kinematics,
    wrap_angle,
)
from .lidar_prep import IpParams, PooledScan, ip_forward, min_pool
from .sac import ActionSpace, ReplayBuffer


class Outcome(Enum):
    SUCCESS = "success"
    CRASH = "crash"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class NavTask:
    start: Pose
    goal: tuple[float, float]
    success_radius: float = 0.3

    def __post_init__(self):
        d = math.hypot(self.goal[0] - self.start.x, self.goal[1] - self.start.y)
        if d <= self.success_radius:
            raise ValueError("start-goal distance must exceed success_radius")


@dataclass
class Observation:
    p: np.ndarray  # preprocessed current scan (length m), for inspection
    pooled: np.ndarray  # raw pooled scan block fed to the networks (m * stack,)
    d_g: float  # goal distance, meters
    phi_g: float  # goal bearing in robot frame, (-pi, pi]
    v: float
    omega: float
    _diag: float = field(repr=False, default=1.0)
    _v_scale: float = field(repr=False, default=1.0)
    _w_scale: float = field(repr=False, default=1.0)

    def vector(self) -> np.ndarray:
        tail = np.array(
            [self.d_g / self._diag, self.phi_g / math.pi, self.v / self._v_scale, self.omega / self._w_scale]
        )
        return np.concatenate([self.pooled, tail])


@dataclass
class EpisodeResult:
    outcome: Outcome | None  # None only when the loop was stopped externally
    steps: int
    trajectory: list[Pose]
    episode_return: float
    rewards: list[float] = field(default_factory=list)
    velocities: list[tuple[float, float]] = field(default_factory=list)  # (v, omega) per pose


class NavEnv:
    """One robot, one immutable map. Mutation is confined to the episode
    state, so several instances can share a grid across workers."""

    def __init__(
        self,
        grid: OccupancyGrid,
        body: RobotBody,
        lidar: LidarSpec,
        ip_params: IpParams,
        pool_k: int,
        *,
        dt: float = 0.2,
        t_max: int = 200,
        c_dense: float = 2.0,
        r_success: float = 10.0,
        r_crash: float = -10.0,
        v_limits: tuple[float, float] = (0.0, 0.5),
        omega_max: float = math.pi / 2,
        scan_stack: int = 1,
        noise_std: float = 0.0,
        noise_rng: np.random.Generator | None = None,
    ):
        if lidar.n_beams % pool_k != 0:
            raise ValueError("pool window mismatch")
        self.grid = grid
        self.body = body
        self.lidar = lidar
        self.ip_params = ip_params
        self.pool_k = pool_k
        self.dt = dt
        self.t_max = t_max
        self.c_dense = c_dense
        self.r_success = r_success
        self.r_crash = r_crash
        self.v_limits = v_limits
        self.omega_max = omega_max
        self.scan_stack = scan_stack
        self.noise_std = noise_std
        self.noise_rng = noise_rng
        self.m = lidar.n_beams // pool_k
        self.action_space = ActionSpace(
            low=np.array([v_limits[0], -omega_max]), high=np.array([v_limits[1], omega_max])
        )
        self._task: NavTask | None = None
        self._state: DiffDriveState | None = None
        self._t = 0
        self._done = True
        self._stack: list[np.ndarray] = []
        self._last_pooled: PooledScan | None = None

    @property
    def obs_dim(self) -> int:
        return self.m * self.scan_stack + 4

    @property
    def state(self) -> DiffDriveState:
        return self._state

    @property
    def steps(self) -> int:
        return self._t

    def pooled_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pooled-beam (y_min, y_max) implied by footprint and sensor."""
        d_min = np.array([footprint_min_range(self.body, a) for a in self.lidar.beam_angles])
        y_min = d_min.reshape(self.m, self.pool_k).min(axis=1)
        y_max = np.full(self.m, self.lidar.max_range)
        return y_min, y_max

    def reset(self, task: NavTask) -> Observation:
        if collision_check(self.grid, task.start, self.body):
            raise ValueError("task start pose collides")
        self._task = task
        self._state = DiffDriveState(task.start, 0.0, 0.0, self.v_limits, self.omega_max)
        self._t = 0
        self._done = False
        pooled = self._sense()
        self._stack = [pooled.values.copy() for _ in range(self.scan_stack)]
        return self._observe()

    def step(self, action: tuple[float, float]) -> tuple[Observation, float, int, Outcome | None]:
        """Advance one control period. Returns (observation, reward, done,
        outcome); done=1 covers success, crash and timeout, while outcome is
        None for ordinary steps. Raises if called after the episode ended."""
        if self._done:
            raise RuntimeError("step after episode end")
        d_prev = self._goal_distance()
        self._state = step_kinematics(self._state, action, self.dt)
        self._t += 1
        d_next = self._goal_distance()
        outcome: Outcome | None = None
        if collision_check(self.grid, self._state.pose, self.body):
            reward = self.r_crash
            outcome = Outcome.CRASH
        elif d_next <= self._task.success_radius:
            reward = self.r_success
            outcome = Outcome.SUCCESS
        else:
            reward = self.c_dense * (d_prev - d_next)
            if self._t >= self.t_max:
                outcome = Outcome.TIMEOUT
        self._done = outcome is not None
        pooled = self._sense()
        self._stack.append(pooled.values.copy())
        if len(self._stack) > self.scan_stack:
            self._stack.pop(0)
        return self._observe(), float(reward), int(self._done), outcome

    # -- internals --------------------------------------------------------------

    def _goal_distance(self) -> float:
        gx, gy = self._task.goal
        return math.hypot(gx - self._state.pose.x, gy - self._state.pose.y)

    def _sense(self) -> PooledScan:
        lx, ly = self.body.lidar_world_position(self._state.pose)
        if self.grid.free_at(lx, ly):
            frame = scan(self.grid, self._state.pose, self.body, self.lidar, self.noise_std, self.noise_rng)
            self._last_pooled = min_pool(frame, self.pool_k)
        # On deep penetration after a crash the mount can sit inside a wall;
        # reuse the previous sweep (the transition is terminal and masked).
        return self._last_pooled

    def _observe(self) -> Observation:
        pose = self._state.pose
        gx, gy = self._task.goal
        pooled_block = np.concatenate(self._stack) if self.scan_stack > 1 else self._stack[-1]
        return Observation(
            p=ip_forward(self._last_pooled, self.ip_params),
            pooled=pooled_block.copy(),
            d_g=self._goal_distance(),
            phi_g=wrap_angle(math.atan2(gy - pose.y, gx - pose.x) - pose.theta),
            v=self._state.v,
            omega=self._state.omega,
            _diag=self.grid.diagonal,
            _v_scale=max(abs(self.v_limits[0]), abs(self.v_limits[1])),
            _w_scale=self.omega_max,
        )


def sample_task(
    grid: OccupancyGrid,
    body: RobotBody,
    rng: np.random.Generator,
    success_radius: float = 0.3,
    min_separation: float = 0.0,
    max_tries: int = 10_000,
) -> NavTask:
    """Rejection-sample a collision-free start pose and goal point.

    Deterministic under the generator's state. Raises after max_tries draws
    without a free placement."""
    x0, y0 = grid.origin
    lo = np.array([x0, y0])
    hi = np.array([x0 + grid.world_width, y0 + grid.world_height])
    min_d = max(success_radius, min_separation)

    def free_pose(theta: float) -> Pose | None:
        p = rng.uniform(lo, hi)
        pose = Pose(p[0], p[1], theta)
        return pose if not collision_check(grid, pose, body) else None

    start = None
    for _ in range(max_tries):
        start = free_pose(rng.uniform(-math.pi, math.pi))
        if start is not None:
            break
    if start is None:
        raise RuntimeError("no free space found")
    for _ in range(max_tries):
        goal = free_pose(0.0)
        if goal is None:
            continue
        if math.hypot(goal.x - start.x, goal.y - start.y) > min_d:
            return NavTask(start, (goal.x, goal.y), success_radius)
    raise RuntimeError("no free space found")


def run_episode(
    env: NavEnv,
    bundle,
    task: NavTask,
    mode: str,
    *,
    buffer: ReplayBuffer | None = None,
    update_fn=None,
    rng: np.random.Generator | None = None,
    step_hook=None,
) -> EpisodeResult:
    """One full interaction episode.

    mode 'train': stochastic policy actions, transitions stored, one update
    block per step. mode 'random': uniform actions, transitions stored, no
    updates (the warmup phase). mode 'eval': deterministic policy, nothing
    stored. ``step_hook``, when given, runs after every step and may return
    False to stop the episode early (trainer bookkeeping); the result then
    carries outcome None.
    """
    if mode not in ("train", "eval", "random"):
        raise ValueError(f"unknown mode {mode!r}")
    obs = env.reset(task)
    trajectory = [env.state.pose]
    velocities = [(0.0, 0.0)]
    rewards: list[float] = []
    outcome: Outcome | None = None
    while True:
        if mode == "random":
            action = env.action_space.sample_uniform(rng)
        else:
            action = bundle.act(obs.vector(), deterministic=(mode == "eval"))
        obs2, reward, done, outcome = env.step(action)
        if mode in ("train", "random") and buffer is not None:
            terminal = 1.0 if outcome in (Outcome.SUCCESS, Outcome.CRASH) else 0.0
            buffer.push(obs.vector(), action, reward, obs2.vector(), terminal)
        if mode == "train" and update_fn is not None:
            update_fn()
        rewards.append(reward)
        trajectory.append(env.state.pose)
        velocities.append((env.state.v, env.state.omega))
        obs = obs2
        keep_going = True if step_hook is None else bool(step_hook())
        if done:
            break
        if not keep_going:
            outcome = None
            break
    return EpisodeResult(outcome, len(rewards), trajectory, float(sum(rewards)), rewards, velocities)


# -- task suites and trajectory export -------------------------------------------


def save_suite(path: str | Path, tasks: list[NavTask], map_path: str) -> None:
    """Plain-text task list: header with the map reference and success radius,
    one ``task sx sy stheta gx gy`` line per task."""
    if not tasks:
        raise ValueError("empty task suite")
    lines = [f"map {map_path}", f"success_radius {tasks[0].success_radius}"]
    for t in tasks:
        lines.append(f"task {t.start.x!r} {t.start.y!r} {t.start.theta!r} {t.goal[0]!r} {t.goal[1]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_suite(path: str | Path) -> tuple[list[NavTask], str, float]:
    """Returns (tasks, map path as written, success radius)."""
    map_path = None
    radius = 0.3
    tasks: list[NavTask] = []
    for ln in Path(path).read_text().splitlines():
        parts = ln.split()
        if not parts:
            continue
        if parts[0] == "map":
            map_path = ln.split(maxsplit=1)[1]
        elif parts[0] == "success_radius":
            radius = float(parts[1])
        elif parts[0] == "task":
            sx, sy, st, gx, gy = map(float, parts[1:6])
            tasks.append(NavTask(Pose(sx, sy, st), (gx, gy), radius))
        else:
            raise ValueError(f"bad suite line: {ln!r}")
    if map_path is None or not tasks:
        raise ValueError("suite must name a map and at least one task")
    return tasks, map_path, radius


def write_trajectory_csv(path: str | Path, result: EpisodeResult) -> None:
    """CSV rows (step, x, y, theta, v, omega, reward); row 0 is the reset
    state, so its reward cell is empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "x", "y", "theta", "v", "omega", "reward"])
        for i, pose in enumerate(result.trajectory):
            v, om = result.velocities[i] if i < len(result.velocities) else (0.0, 0.0)
            reward = f"{result.rewards[i - 1]:.6f}" if 0 < i <= len(result.rewards) else ""
            w.writerow([i, f"{pose.x:.6f}", f"{pose.y:.6f}", f"{pose.theta:.6f}", f"{v:.6f}", f"{om:.6f}", reward])


def path_length(trajectory: list[Pose]) -> float:
    total = 0.0
    for a, b in zip(trajectory, trajectory[1:]):
        total += math.hypot(b.x - a.x, b.y - a.y)
    return total
