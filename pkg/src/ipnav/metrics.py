"""Evaluation metrics: the per-episode navigation score, periodic evaluation
records, learning-curve CSV files, and the cross-run summary table.

Score per episode: 1 - 2*T_s/T_max on success, -1 otherwise, so it rewards
both completing the task and completing it quickly; S is always in [-1, 1].

Run summaries report, per scenario, the maximum success rate (MSR) and the
maximum mean score (MANS) observed across a run's periodic evaluations;
across seeds these are aggregated as mean and population standard deviation
(disclosed in the output header).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nav_env import Outcome

LEARNING_CURVE_NAME = "learning_curve.csv"


def score(outcome: Outcome, t_s: int, t_max: int) -> float:
    """Navigation score of one episode."""
    if not 0 <= t_s <= t_max:
        raise ValueError("require 0 <= T_s <= T_max")
    if outcome is Outcome.SUCCESS:
        return 1.0 - 2.0 * t_s / t_max
    return -1.0


@dataclass
class EvalRecord:
    step: int
    success_rate: dict[str, float]  # per scenario
    mean_score: dict[str, float]
    mean_length: dict[str, float]

    def scenarios(self) -> list[str]:
        return sorted(self.success_rate)


def write_learning_curve(path: str | Path, records: list[EvalRecord]) -> None:
    if not records:
        raise ValueError("no evaluation records")
    scenarios = records[0].scenarios()
    header = ["step"]
    for s in scenarios:
        header += [f"sr_{s}", f"score_{s}", f"len_{s}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in records:
            if r.scenarios() != scenarios:
                raise ValueError("inconsistent scenarios")
            row = [r.step]
            for s in scenarios:
                row += [f"{r.success_rate[s]:.6g}", f"{r.mean_score[s]:.6g}", f"{r.mean_length[s]:.6g}"]
            w.writerow(row)


def read_learning_curve(path: str | Path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"no evaluation records in {path}")
    header = rows[0]
    scenarios = [h[3:] for h in header if h.startswith("sr_")]
    records = []
    for row in rows[1:]:
        vals = dict(zip(header, row))
        records.append(
            EvalRecord(
                step=int(vals["step"]),
                success_rate={s: float(vals[f"sr_{s}"]) for s in scenarios},
                mean_score={s: float(vals[f"score_{s}"]) for s in scenarios},
                mean_length={s: float(vals[f"len_{s}"]) for s in scenarios},
            )
        )
    return records


def success_rate_auc(records: list[EvalRecord], scenario: str) -> float:
    """Area under the success-rate learning curve (trapezoid over steps)."""
    xs = np.array([r.step for r in records], dtype=float)
    ys = np.array([r.success_rate[scenario] for r in records], dtype=float)
    return float(np.trapezoid(ys, xs))


@dataclass
class RunSummary:
    scenarios: list[str]
    msr_mean: dict[str, float]
    msr_sd: dict[str, float]
    mans_mean: dict[str, float]
    mans_sd: dict[str, float]
    n_runs: int


def summarize(run_dirs: list[str | Path]) -> RunSummary:
    """MSR/MANS per scenario, aggregated over run directories (seeds)."""
    if not run_dirs:
        raise ValueError("no run directories")
    per_run_msr: list[dict[str, float]] = []
    per_run_mans: list[dict[str, float]] = []
    scenarios: list[str] | None = None
    for d in run_dirs:
        records = read_learning_curve(Path(d) / LEARNING_CURVE_NAME)
        if not records:
            raise ValueError(f"no evaluation records in {d}")
        scen = records[0].scenarios()
        if scenarios is None:
            scenarios = scen
        elif scen != scenarios:
            raise ValueError("inconsistent scenarios")
        per_run_msr.append({s: max(r.success_rate[s] for r in records) for s in scen})
        per_run_mans.append({s: max(r.mean_score[s] for r in records) for s in scen})

    def agg(per_run: list[dict[str, float]]):
        mean = {}
        sd = {}
        for s in scenarios:
            vals = np.array([r[s] for r in per_run])
            mean[s] = float(vals.mean())
            sd[s] = float(vals.std())  # population SD
        return mean, sd

    msr_mean, msr_sd = agg(per_run_msr)
    mans_mean, mans_sd = agg(per_run_mans)
    return RunSummary(scenarios, msr_mean, msr_sd, mans_mean, mans_sd, len(run_dirs))


def summary_table(summary: RunSummary) -> str:
    """Aligned text table (SD is population SD over runs)."""
    lines = [f"# {summary.n_runs} run(s); mean/SD, population SD"]
    hdr = f"{'scenario':<12} {'MSR':>14} {'MANS':>14}"
    lines.append(hdr)
    lines.append("-" * len(hdr))
    for s in summary.scenarios:
        msr = f"{summary.msr_mean[s]:.3f}/{summary.msr_sd[s]:.3f}"
        mans = f"{summary.mans_mean[s]:.3f}/{summary.mans_sd[s]:.3f}"
        lines.append(f"{s:<12} {msr:>14} {mans:>14}")
    return "\n".join(lines)


def write_summary_csv(summary: RunSummary, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# SD is population SD over runs"])
        w.writerow(["scenario", "msr_mean", "msr_sd", "mans_mean", "mans_sd", "n_runs"])
        for s in summary.scenarios:
            w.writerow(
                [
                    s,
                    f"{summary.msr_mean[s]:.6g}",
                    f"{summary.msr_sd[s]:.6g}",
                    f"{summary.mans_mean[s]:.6g}",
                    f"{summary.mans_sd[s]:.6g}",
                    summary.n_runs,
                ]
            )
