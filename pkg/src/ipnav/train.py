"""Experiment orchestration: the training loop with periodic evaluations and
checkpoints, standalone checkpoint evaluation, and the preprocessing
diagnostic report.

A run directory contains:
    config_echo.yaml    fully resolved configuration
    suites/<name>.suite fixed evaluation task lists, one per scenario
    learning_curve.csv  one row per periodic evaluation (step 0 included)
    train_log.csv       step, critic_loss, policy_loss, ip parameter, buffer size
    checkpoints/ck_<step>.npz
"""

from __future__ import annotations

import csv
import math
import time
from pathlib import Path

import numpy as np

from .checkpoint import load_agent, save_agent
from .config import ExperimentConfig, dump_config, rng_stream
from .gridworld import Circle, LidarSpec, OccupancyGrid, Rectangle, RobotBody, footprint_min_range
from .lidar_prep import IpParams
from .metrics import EvalRecord, score, write_learning_curve
from .nav_env import NavEnv, NavTask, Outcome, path_length, run_episode, sample_task, save_suite, load_suite, write_trajectory_csv
from .nn import NetworkSpec, ObsLayout
from .sac import ReplayBuffer, make_agent, sac_update

TRAIN_LOG_PERIOD = 100


def build_body(robot) -> RobotBody:
    shape = Circle(robot.radius) if robot.shape == "circle" else Rectangle(robot.length, robot.width)
    return RobotBody(shape, tuple(robot.lidar_offset))


def build_env(cfg: ExperimentConfig, grid: OccupancyGrid, scan_stack: int) -> NavEnv:
    body = build_body(cfg.robot)
    lidar = LidarSpec(math.radians(cfg.lidar.fov_deg), cfg.lidar.n_beams, cfg.lidar.max_range)
    if lidar.n_beams % cfg.pool_k != 0:
        raise ValueError("pool window mismatch")
    m = lidar.n_beams // cfg.pool_k
    d_min = np.array([footprint_min_range(body, a) for a in lidar.beam_angles])
    y_min = d_min.reshape(m, cfg.pool_k).min(axis=1)
    y_max = np.full(m, lidar.max_range)
    ip = IpParams.create(cfg.ip_family, y_min, y_max, shared=cfg.ip_shared)
    return NavEnv(
        grid,
        body,
        lidar,
        ip,
        cfg.pool_k,
        dt=cfg.episode.dt,
        t_max=cfg.episode.t_max,
        v_limits=(cfg.episode.v_min, cfg.episode.v_max),
        omega_max=cfg.episode.omega_max,
        scan_stack=scan_stack,
    )


def evaluate_suite(env: NavEnv, bundle, tasks: list[NavTask], t_max: int):
    """Deterministic rollouts over a fixed task list."""
    results = [run_episode(env, bundle, t, "eval") for t in tasks]
    sr = float(np.mean([r.outcome is Outcome.SUCCESS for r in results]))
    sc = float(np.mean([score(r.outcome, r.steps, t_max) for r in results]))
    ln = float(np.mean([r.steps for r in results]))
    return sr, sc, ln, results


def _sync_env_ip(env: NavEnv, bundle) -> None:
    # Keep the env's diagnostic preprocessing in step with the trained parameter.
    if bundle.ip is not None and bundle.ip.zeta is not None and env.ip_params.raw is not None:
        env.ip_params.raw[:] = bundle.ip.zeta.data.astype(float)


def train_command(cfg: ExperimentConfig, progress: bool = True) -> Path:
    """Run the full interaction/update loop of the configured experiment."""
    cfg.validate()
    out = Path(cfg.out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "suites").mkdir(exist_ok=True)
    dump_config(cfg, out / "config_echo.yaml")

    grids = {name: OccupancyGrid.from_file(p) for name, p in cfg.map_paths().items()}
    spec = NetworkSpec.for_model(cfg.model)
    envs = {name: build_env(cfg, grid, spec.scan_stack) for name, grid in grids.items()}
    train_env = envs["train"]
    y_min, y_max = train_env.pooled_bounds()
    layout = ObsLayout(train_env.m, spec.scan_stack)

    seed = cfg.seed
    bundle = make_agent(
        layout,
        train_env.action_space,
        spec,
        ip_family=cfg.ip_family,
        y_min=y_min,
        y_max=y_max,
        ip_shared=cfg.ip_shared,
        separate_ip_params=cfg.sac.separate_ip_params,
        alpha=cfg.sac.alpha,
        gamma=cfg.sac.gamma,
        tau=cfg.sac.tau,
        lr=cfg.sac.lr,
        grad_clip=cfg.sac.grad_clip,
        init_rng=rng_stream(seed, "init"),
        noise_rng=rng_stream(seed, "policy"),
        dropout_rng=rng_stream(seed, "dropout"),
    )
    buffer = ReplayBuffer(cfg.sac.buffer_capacity, train_env.obs_dim, 2, rng_stream(seed, "buffer"))
    update_rng = rng_stream(seed, "update")
    task_rng = rng_stream(seed, "task")
    explore_rng = rng_stream(seed, "explore")
    body = train_env.body

    suites: dict[str, list[NavTask]] = {}
    for name, grid in grids.items():
        srng = rng_stream(seed, f"suite:{name}")
        suites[name] = [
            sample_task(grid, body, srng, cfg.episode.success_radius, cfg.episode.task_min_separation)
            for _ in range(cfg.eval_tasks)
        ]
        save_suite(out / "suites" / f"{name}.suite", suites[name], cfg.map_paths()[name])

    records: list[EvalRecord] = []
    train_log_path = out / "train_log.csv"
    with open(train_log_path, "w", newline="") as fh:
        csv.writer(fh).writerow(["step", "critic_loss", "policy_loss", "ip_param_mean", "buffer_size"])

    ckpt_meta = {"config": cfg.to_dict()}
    step = 0
    last_losses = (float("nan"), float("nan"))
    t_start = time.time()

    def run_evals() -> None:
        rec = EvalRecord(step, {}, {}, {})
        for name, env in envs.items():
            _sync_env_ip(env, bundle)
            sr, sc, ln, _ = evaluate_suite(env, bundle, suites[name], cfg.episode.t_max)
            rec.success_rate[name] = sr
            rec.mean_score[name] = sc
            rec.mean_length[name] = ln
        records.append(rec)
        write_learning_curve(out / "learning_curve.csv", records)
        save_agent(
            out / "checkpoints" / f"ck_{step:08d}.npz",
            bundle,
            step=step,
            root_seed=seed,
            separate_ip_params=cfg.sac.separate_ip_params,
            extra_meta=ckpt_meta,
        )
        if progress:
            srs = " ".join(f"{n}={rec.success_rate[n]:.2f}" for n in sorted(rec.success_rate))
            print(f"[eval] step {step:>7} sr: {srs} ({time.time() - t_start:.0f}s)", flush=True)

    def log_train_row() -> None:
        zeta = bundle.ip.constrained_value() if bundle.ip is not None else None
        with open(train_log_path, "a", newline="") as fh:
            csv.writer(fh).writerow(
                [
                    step,
                    f"{last_losses[0]:.6g}",
                    f"{last_losses[1]:.6g}",
                    "" if zeta is None else f"{float(np.mean(zeta)):.6g}",
                    len(buffer),
                ]
            )

    def update_fn() -> None:
        nonlocal last_losses
        if len(buffer) >= cfg.sac.batch_size:
            last_losses = sac_update(bundle, buffer, cfg.sac.batch_size, update_rng)

    def step_hook() -> bool:
        nonlocal step
        step += 1
        if step % TRAIN_LOG_PERIOD == 0:
            log_train_row()
        if step % cfg.sac.eval_period == 0 and step <= cfg.sac.total_steps:
            run_evals()
        return step < cfg.sac.total_steps

    run_evals()  # step 0, untrained policy
    episodes = 0
    while step < cfg.sac.total_steps:
        task = sample_task(
            grids["train"], body, task_rng, cfg.episode.success_radius, cfg.episode.task_min_separation
        )
        mode = "random" if episodes < cfg.sac.random_episodes else "train"
        run_episode(
            train_env,
            bundle,
            task,
            mode,
            buffer=buffer,
            update_fn=update_fn,
            rng=explore_rng,
            step_hook=step_hook,
        )
        episodes += 1
    return out


def eval_command(checkpoint_path: str | Path, suite_path: str | Path, out_dir: str | Path) -> dict:
    """Deterministic rollouts of a checkpointed agent over a task suite.

    Writes eval.csv (per-task outcome, steps, score, path-length ratio) and
    one trajectory CSV per task; returns aggregate numbers.
    """
    bundle, meta = load_agent(checkpoint_path)
    cfg_dict = meta.get("extra", {}).get("config")
    if not cfg_dict:
        raise ValueError("checkpoint carries no experiment config; cannot rebuild the environment")
    cfg = ExperimentConfig()
    from .config import _apply  # same schema as config files

    _apply(cfg, cfg_dict, "")
    tasks, map_ref, radius = load_suite(suite_path)
    map_path = Path(map_ref)
    if not map_path.is_absolute():
        map_path = Path(suite_path).parent / map_path
    grid = OccupancyGrid.from_file(map_path)
    env = build_env(cfg, grid, bundle.spec.scan_stack)
    if env.obs_dim != bundle.layout.total:
        raise ValueError(
            f"checkpoint/suite mismatch: env observation dim {env.obs_dim} != agent {bundle.layout.total}"
        )
    _sync_env_ip(env, bundle)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    results = []
    for i, task in enumerate(tasks):
        res = run_episode(env, bundle, task, "eval")
        results.append(res)
        straight = math.hypot(task.goal[0] - task.start.x, task.goal[1] - task.start.y)
        traveled = path_length(res.trajectory)
        rows.append(
            {
                "task": i,
                "outcome": res.outcome.value,
                "steps": res.steps,
                "score": score(res.outcome, res.steps, cfg.episode.t_max),
                "return": res.episode_return,
                "path_len": traveled,
                "straight_len": straight,
                "path_ratio": traveled / straight if straight > 0 else float("nan"),
            }
        )
        write_trajectory_csv(out / f"traj_{i:03d}.csv", res)
    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    successes = [r for r in rows if r["outcome"] == "success"]
    return {
        "success_rate": len(successes) / len(rows),
        "mean_score": float(np.mean([r["score"] for r in rows])),
        "mean_length": float(np.mean([r["steps"] for r in rows])),
        "mean_path_ratio_success": float(np.mean([r["path_ratio"] for r in successes])) if successes else float("nan"),
        "rows": rows,
    }


def pos_report_command(cfg: ExperimentConfig, checkpoint_path: str | Path | None = None):
    """Per-beam short-range fraction report for the configured setup; with a
    checkpoint, uses the trained preprocessing parameter."""
    from .lidar_prep import build_pos_report

    grid = OccupancyGrid.from_file(cfg.map_paths()["train"])
    spec = NetworkSpec.for_model(cfg.model)
    env = build_env(cfg, grid, spec.scan_stack)
    params = env.ip_params
    if checkpoint_path is not None:
        bundle, _ = load_agent(checkpoint_path)
        _sync_env_ip(env, bundle)
    return build_pos_report(params)
