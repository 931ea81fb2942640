"""Command-line front end.

Verbs:
    train       run the configured experiment (checkpoints + learning curve)
    eval        roll a checkpointed agent over a task suite
    summarize   MSR/MANS table across run directories
    pos-report  per-beam short-range fraction report as CSV
    gradcheck   finite-difference verification of all gradients

Any error exits nonzero with a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .metrics import summarize, summary_table, write_summary_csv


def _cmd_train(args) -> int:
    from .train import train_command

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    out = train_command(cfg)
    print(f"run complete: {out}")
    return 0


def _cmd_eval(args) -> int:
    from .train import eval_command

    out_dir = args.out or "eval_out"
    res = eval_command(args.checkpoint, args.suite, out_dir)
    print(
        f"success_rate={res['success_rate']:.3f} mean_score={res['mean_score']:.3f} "
        f"mean_length={res['mean_length']:.1f} mean_path_ratio(success)={res['mean_path_ratio_success']:.3f}"
    )
    print(f"wrote {out_dir}/eval.csv and per-task trajectories")
    return 0


def _cmd_summarize(args) -> int:
    s = summarize(args.runs)
    print(summary_table(s))
    if args.out:
        write_summary_csv(s, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_pos_report(args) -> int:
    from .train import pos_report_command

    cfg = load_config(args.config)
    report = pos_report_command(cfg, args.checkpoint)
    out = args.out or "pos_report.csv"
    report.to_csv(out)
    n = report.rho_mapped.shape[0]
    print(f"wrote {out} ({n} beams; mean rho_linear={report.rho_linear.mean():.4f}, "
          f"mean rho_mapped={report.rho_mapped.mean():.4f})")
    return 0


def _cmd_gradcheck(args) -> int:
    from .checks import run_all

    results = run_all(samples_per_tensor=args.samples)
    worst = 0.0
    for name, err in results.items():
        print(f"{name:<24} {err:.3e}")
        worst = max(worst, err)
    print(f"{'worst':<24} {worst:.3e}")
    if worst >= args.tol:
        print(f"FAIL: worst relative error {worst:.3e} >= {args.tol:g}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipnav", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="run a training experiment")
    t.add_argument("--config", required=True, help="YAML experiment config")
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--out", default=None, help="override the output directory")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a task suite")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--suite", required=True, help="task suite file")
    e.add_argument("--out", default=None, help="output directory")
    e.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("summarize", help="MSR/MANS across runs")
    s.add_argument("runs", nargs="+", help="run directories containing learning_curve.csv")
    s.add_argument("--out", default=None, help="also write CSV here")
    s.set_defaults(fn=_cmd_summarize)

    r = sub.add_parser("pos-report", help="short-range fraction report")
    r.add_argument("--config", required=True)
    r.add_argument("--checkpoint", default=None, help="use the trained preprocessing parameter")
    r.add_argument("--out", default=None, help="CSV path (default pos_report.csv)")
    r.set_defaults(fn=_cmd_pos_report)

    g = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    g.add_argument("--samples", type=int, default=25, help="probed entries per parameter tensor")
    g.add_argument("--tol", type=float, default=1e-4, help="failure threshold on relative error")
    g.set_defaults(fn=_cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
