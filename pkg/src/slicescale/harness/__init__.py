"""Experiment orchestration: configuration, training loops, seeded
evaluation, robustness sweeps, fine-tuning, and report emission.
"""

from .config import (ExperimentConfig, build_episode_config, build_model,
                     build_source, load_config, make_agent, save_config)
from .metrics import MetricsRecord, SweepResult
from .report import emit_report, write_metrics_csv, write_summary_json
from .run import (TrainResult, evaluate, finetune, run_episode,
                  sweep_conditions, sweep_noise, train)

__all__ = [
    "ExperimentConfig", "MetricsRecord", "SweepResult", "TrainResult",
    "build_episode_config", "build_model", "build_source", "emit_report",
    "evaluate", "finetune", "load_config", "make_agent", "run_episode",
    "save_config", "sweep_conditions", "sweep_noise", "train",
    "write_metrics_csv", "write_summary_json",
]
