"""Command-line entry points.

Subcommands: gen-model, fit-model, train, evaluate, sweep-conditions,
sweep-noise, finetune, report.  Global flags --config/--seed/--out select
the experiment configuration; outputs land under the --out directory as
metrics.csv, summary.json, curves/*.png, and checkpoints/*.npz.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import network_model as nm
from .agents.checkpoint import load_checkpoint, save_checkpoint
from .harness import config as hconfig
from .harness import report as hreport
from .harness import run as hrun


def _experiment_config(args) -> hconfig.ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.config is not None:
        return hconfig.load_config(args.config, **overrides)
    return hconfig.ExperimentConfig(**overrides)


def _resolve_policy(args, cfg, model):
    if getattr(args, "checkpoint", None):
        return hrun.policy_from_checkpoint(load_checkpoint(args.checkpoint))
    if cfg.agent == "pred-alloc":
        return hconfig.make_agent(cfg, model)
    raise SystemExit("a --checkpoint is required unless agent = pred-alloc")


def _float_list(raw: str) -> list[float]:
    return [float(v) for v in raw.split(",") if v.strip()]


def cmd_gen_model(args) -> int:
    cfg = nm.calibrated_config()
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    samples = nm.generate_synthetic_grid(cfg, args.samples_per_cell, rng)
    nm.save_samples(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out} (lambda={cfg.lam:.6f})")
    return 0


def cmd_fit_model(args) -> int:
    samples = nm.load_samples(args.samples)
    model = nm.fit_from_samples(samples)
    nm.save_model(model, args.out)
    print(f"fitted {model.shape[0]}x{model.shape[1]} grid -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    result = hrun.train(cfg, update_log=args.update_log)
    out = Path(cfg.out_dir)
    ckpt_dir = out / "checkpoints"
    save_checkpoint(result.best, ckpt_dir / "best.npz")
    save_checkpoint(result.last, ckpt_dir / "last.npz")
    model = hconfig.build_model(cfg)
    record = hrun.evaluate(
        hrun.policy_from_checkpoint(result.best), model,
        hconfig.build_episode_config(cfg), hconfig.build_source(cfg),
        cfg.eval_episodes, cfg.seed, label=f"{cfg.agent}|train-source",
        cfg_hash=cfg.hash())
    summary = {
        "command": "train", "agent": cfg.agent, "config_hash": cfg.hash(),
        "best_epoch": result.best_epoch, "warning": result.warning,
        "records": [record.as_dict()], "curves": result.curves,
    }
    hreport.emit_report(summary, out)
    print(f"best epoch {result.best_epoch}: "
          f"bandwidth {record.mean_bandwidth_pct:.1f}%, "
          f"degradation {record.mean_qos_degradation_pct:.2f}%")
    if result.warning:
        print(f"warning: {result.warning}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _experiment_config(args)
    model = hconfig.build_model(cfg)
    policy = _resolve_policy(args, cfg, model)
    episodes = args.episodes if args.episodes is not None else cfg.eval_episodes
    record = hrun.evaluate(
        policy, model, hconfig.build_episode_config(cfg), hconfig.build_source(cfg),
        episodes, cfg.seed, label=args.label or f"{cfg.agent}|{cfg.traffic_source}",
        log_path=args.episode_log, cfg_hash=cfg.hash())
    summary = {"command": "evaluate", "config_hash": cfg.hash(),
               "records": [record.as_dict()]}
    hreport.emit_report(summary, Path(cfg.out_dir))
    print(f"{record.label}: bandwidth {record.mean_bandwidth_pct:.1f}%, "
          f"degradation {record.mean_qos_degradation_pct:.2f}% "
          f"({record.episodes} episodes)")
    return 0


def _run_sweep(args, which: str) -> int:
    cfg = _experiment_config(args)
    model = hconfig.build_model(cfg)
    policy = _resolve_policy(args, cfg, model)
    if which == "conditions":
        values = _float_list(args.d_values) if args.d_values else hrun.DEFAULT_D_VALUES
        sweep = hrun.sweep_conditions(policy, cfg, model, values, args.episodes)
    else:
        values = _float_list(args.sigmas) if args.sigmas else hrun.DEFAULT_NOISE_VALUES
        sweep = hrun.sweep_noise(policy, cfg, model, values, args.episodes)
    summary = {"command": f"sweep-{which}", "config_hash": cfg.hash(),
               "records": [r.as_dict() for r in sweep.records + [sweep.reference]],
               "sweeps": [sweep.as_dict()]}
    hreport.emit_report(summary, Path(cfg.out_dir))
    for value, rec in zip(sweep.values, sweep.records):
        print(f"{sweep.parameter}={value:g}: bandwidth {rec.mean_bandwidth_pct:.1f}%, "
              f"degradation {rec.mean_qos_degradation_pct:.2f}%")
    ref = sweep.reference
    print(f"reference ({ref.label}): bandwidth {ref.mean_bandwidth_pct:.1f}%, "
          f"degradation {ref.mean_qos_degradation_pct:.2f}%")
    return 0


def cmd_finetune(args) -> int:
    cfg = _experiment_config(args)
    ckpt = load_checkpoint(args.checkpoint)
    result = hrun.finetune(ckpt, cfg, epochs=args.epochs,
                           risk_alpha=args.risk_alpha, lr_scale=args.lr_scale,
                           condition_d=args.condition_d)
    out = Path(cfg.out_dir)
    save_checkpoint(result.best, out / "checkpoints" / "finetuned.npz")
    summary = {
        "command": "finetune", "config_hash": cfg.hash(),
        "condition_d": args.condition_d, "warning": result.warning,
        "records": [result.pre.as_dict(), result.post.as_dict()],
        "curves": result.curves,
    }
    hreport.emit_report(summary, out)
    print(f"pre:  bandwidth {result.pre.mean_bandwidth_pct:.1f}%, "
          f"degradation {result.pre.mean_qos_degradation_pct:.2f}%")
    print(f"post: bandwidth {result.post.mean_bandwidth_pct:.1f}%, "
          f"degradation {result.post.mean_qos_degradation_pct:.2f}%")
    return 0


def cmd_report(args) -> int:
    summary = hreport.load_summary_json(args.summary)
    paths = hreport.emit_report(summary, args.out)
    print(f"re-emitted {len(paths)} artifacts under {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slicescale",
        description="QoS-constrained slice resource-scaling simulator and trainer")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (key = value lines)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model",
                       help="emit synthetic grid-search QoS samples")
    p.add_argument("--samples-per-cell", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="samples CSV path")
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("fit-model",
                       help="fit a QoS grid model from samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True, help="model CSV path")
    p.set_defaults(func=cmd_fit_model)

    p = sub.add_parser("train", parents=[common], help="train the configured agent")
    p.add_argument("--update-log", help="write per-update diagnostics JSON-lines here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--label")
    p.add_argument("--episode-log", help="write per-step JSON-lines here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-conditions", parents=[common],
                       help="evaluate across deterministic network conditions")
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--d-values", help="comma-separated condition values")
    p.set_defaults(func=lambda a: _run_sweep(a, "conditions"))

    p = sub.add_parser("sweep-noise", parents=[common],
                       help="evaluate across prediction-noise levels")
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--sigmas", help="comma-separated noise sigmas")
    p.set_defaults(func=lambda a: _run_sweep(a, "noise"))

    p = sub.add_parser("finetune", parents=[common],
                       help="fine-tune a checkpoint on a fixed condition")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--risk-alpha", type=float, default=0.99)
    p.add_argument("--lr-scale", type=float, default=0.1)
    p.add_argument("--condition-d", type=float, default=1.0)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("report",
                       help="re-emit CSV/plots from a summary.json")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
