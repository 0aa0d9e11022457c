"""Training loops, seeded evaluation, robustness sweeps, and fine-tuning.

Seeding: every episode draws its traffic and QoS RNGs from
SeedSequence((base_seed, stream_tag, episode_index)), so (config, seed)
fully determines every emitted number, evaluation episodes are pairable
across sweep points, and episodes could run concurrently with results
reduced by episode index.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..agents.checkpoint import (PolicyCheckpoint, agent_from_checkpoint,
                                 checkpoint_from_agent)
from ..agents.onpolicy import Trajectory
from ..agents.wcsac import WCSACConfig
from ..env import EpisodeConfig, SliceEnv
from ..network_model import QoSModel
from ..traffic import PredictorConfig
from .config import (ExperimentConfig, build_episode_config, build_model,
                     build_predictor, build_source, config_hash, make_agent)
from .metrics import MetricsRecord, SweepResult

TRAIN_STREAM = 0
EVAL_STREAM = 1
FINETUNE_STREAM = 2


class UnsupportedAgentError(ValueError):
    """Raised when an operation does not apply to the given agent kind."""


def episode_rngs(base_seed: int, stream: int, index: int):
    ss = np.random.SeedSequence((base_seed, stream, index))
    traffic_ss, qos_ss = ss.spawn(2)
    return np.random.default_rng(traffic_ss), np.random.default_rng(qos_ss)


def run_episode(env: SliceEnv, source, policy, ep_index: int, base_seed: int,
                stream: int = EVAL_STREAM, deterministic: bool = True,
                log_lines: list | None = None) -> dict:
    """One episode under per-episode seeding; returns its statistics."""
    cfg = env.config
    rng_traffic, rng_qos = episode_rngs(base_seed, stream, ep_index)
    episode = source.episode(cfg.dti_count, cfg.ttis_per_dti, ep_index, rng_traffic)
    obs = env.reset(episode, rng_qos)
    bandwidths, rewards, costs = [], [], []
    while not env.done:
        action = policy.act(obs.vector(), deterministic=deterministic)
        out = env.step(action)
        bandwidths.append(out.info["bandwidth"])
        rewards.append(out.reward)
        costs.append(out.cost)
        if log_lines is not None:
            qos = out.info["qos"]
            log_lines.append(json.dumps({
                "episode": ep_index, "dti": out.info["dti"],
                "bandwidth": out.info["bandwidth"], "reward": out.reward,
                "cost": out.cost, "beta": out.info["beta"],
                "qos": [None if math.isnan(q) else round(q, 6) for q in qos],
            }))
        obs = out.next_observation
    return {"bandwidths": bandwidths, "rewards": rewards, "costs": costs,
            "beta": env.beta()}


def evaluate(policy, model: QoSModel, episode_cfg: EpisodeConfig, source,
             episodes: int = 100, base_seed: int = 0, label: str = "",
             log_path: str | Path | None = None, cfg_hash: str = "") -> MetricsRecord:
    """Deterministic-policy evaluation over seeded episodes."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = SliceEnv(model, episode_cfg)
    log_lines = [] if log_path is not None else None
    ep_bw, ep_beta = [], []
    for i in range(episodes):
        stats = run_episode(env, source, policy, i, base_seed,
                            stream=EVAL_STREAM, deterministic=True,
                            log_lines=log_lines)
        ep_bw.append(float(np.mean(stats["bandwidths"])))
        ep_beta.append(stats["beta"])
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        Path(log_path).write_text("\n".join(log_lines) + "\n")
    return MetricsRecord.from_episodes(label, ep_bw, ep_beta, cfg_hash)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    best: PolicyCheckpoint
    last: PolicyCheckpoint
    curves: list
    best_epoch: int
    warning: str | None = None


class _BestTracker:
    """Lowest mean bandwidth among epochs meeting the degradation threshold,
    with a best-by-degradation fallback when no epoch qualifies."""

    def __init__(self, beta_thresh: float):
        self.beta_thresh = beta_thresh
        self.best = None
        self.best_epoch = -1
        self.best_bw = math.inf
        self.fallback = None
        self.fallback_epoch = -1
        self.fallback_beta = math.inf

    def offer(self, agent, epoch: int, mean_bw: float, mean_beta: float) -> None:
        if mean_beta <= self.beta_thresh and mean_bw < self.best_bw:
            self.best = checkpoint_from_agent(agent, epoch)
            self.best_epoch, self.best_bw = epoch, mean_bw
        if mean_beta < self.fallback_beta:
            self.fallback = checkpoint_from_agent(agent, epoch)
            self.fallback_epoch, self.fallback_beta = epoch, mean_beta

    def result(self):
        if self.best is not None:
            return self.best, self.best_epoch, None
        warning = ("no epoch met the degradation threshold; "
                   "falling back to the lowest-degradation checkpoint")
        return self.fallback, self.fallback_epoch, warning


def _curve_row(epoch, bandwidths, betas, extra=None):
    bw = 100.0 * np.asarray(bandwidths, dtype=float)
    beta = 100.0 * np.asarray(betas, dtype=float)
    row = {
        "epoch": epoch,
        "mean_bandwidth_pct": float(bw.mean()),
        "min_bandwidth_pct": float(bw.min()),
        "max_bandwidth_pct": float(bw.max()),
        "mean_beta_pct": float(beta.mean()),
        "min_beta_pct": float(beta.min()),
        "max_beta_pct": float(beta.max()),
    }
    if extra:
        row.update(extra)
    return row


class _UpdateLog:
    """Optional JSON-lines sink for per-update agent diagnostics."""

    def __init__(self, path: str | Path | None):
        self._fh = None
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = path.open("w")
        self.count = 0

    def write(self, diag: dict) -> None:
        self.count += 1
        if self._fh is not None:
            record = {"update": self.count}
            record.update({k: v for k, v in diag.items()
                           if isinstance(v, (int, float, str, bool))})
            self._fh.write(json.dumps(record) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def _train_wcsac(agent, model, episode_cfg, source, epochs, episodes_per_epoch,
                 base_seed, beta_thresh, stream=TRAIN_STREAM, update_log=None):
    env = SliceEnv(model, episode_cfg)
    tracker = _BestTracker(beta_thresh)
    log = _UpdateLog(update_log)
    curves = []
    episode_counter = 0
    for epoch in range(epochs):
        ep_bw, ep_beta = [], []
        diag = {}
        for _ in range(episodes_per_epoch):
            rng_traffic, rng_qos = episode_rngs(base_seed, stream, episode_counter)
            episode = source.episode(episode_cfg.dti_count, episode_cfg.ttis_per_dti,
                                     episode_counter, rng_traffic)
            obs = env.reset(episode, rng_qos)
            bandwidths = []
            while not env.done:
                if agent.total_steps < agent.config.start_steps:
                    action = float(agent._rng.uniform(-1.0, 1.0))
                else:
                    action = agent.act(obs.vector(), deterministic=False)
                out = env.step(action)
                agent.observe(obs.vector(), np.array([action]), out.reward,
                              out.cost, out.next_observation.vector(), out.done)
                if agent.ready():
                    diag = agent.update()
                    log.write(diag)
                bandwidths.append(out.info["bandwidth"])
                obs = out.next_observation
            ep_bw.append(float(np.mean(bandwidths)))
            ep_beta.append(env.beta())
            episode_counter += 1
        extra = {k: diag[k] for k in ("k", "beta_ent", "gamma_mean") if k in diag}
        curves.append(_curve_row(epoch, ep_bw, ep_beta, extra))
        tracker.offer(agent, epoch, float(np.mean(ep_bw)), float(np.mean(ep_beta)))
    log.close()
    return curves, tracker


def _train_onpolicy(agent, model, episode_cfg, source, epochs, episodes_per_epoch,
                    base_seed, beta_thresh, stream=TRAIN_STREAM, update_log=None):
    env = SliceEnv(model, episode_cfg)
    tracker = _BestTracker(beta_thresh)
    log = _UpdateLog(update_log)
    curves = []
    episode_counter = 0
    for epoch in range(epochs):
        trajectories = []
        ep_bw, ep_beta = [], []
        for _ in range(episodes_per_epoch):
            rng_traffic, rng_qos = episode_rngs(base_seed, stream, episode_counter)
            episode = source.episode(episode_cfg.dti_count, episode_cfg.ttis_per_dti,
                                     episode_counter, rng_traffic)
            obs = env.reset(episode, rng_qos)
            obs_list, act_list, rew_list, cost_list, bandwidths = [], [], [], [], []
            while not env.done:
                vec = obs.vector()
                u = agent.sample_action(vec)
                out = env.step(float(np.tanh(u[0])))
                obs_list.append(vec)
                act_list.append(u)
                rew_list.append(out.reward)
                cost_list.append(out.cost)
                bandwidths.append(out.info["bandwidth"])
                obs = out.next_observation
            trajectories.append(Trajectory(
                np.asarray(obs_list), np.asarray(act_list),
                np.asarray(rew_list), np.asarray(cost_list), env.beta()))
            ep_bw.append(float(np.mean(bandwidths)))
            ep_beta.append(env.beta())
            episode_counter += 1
        diag = agent.update(trajectories)
        log.write(diag)
        extra = {k: v for k, v in diag.items() if isinstance(v, (int, float))}
        curves.append(_curve_row(epoch, ep_bw, ep_beta, extra))
        tracker.offer(agent, epoch, float(np.mean(ep_bw)), float(np.mean(ep_beta)))
    log.close()
    return curves, tracker


def train(cfg: ExperimentConfig, update_log: str | Path | None = None) -> TrainResult:
    """Full training run per the experiment config.

    ``update_log`` optionally writes per-update diagnostics (losses,
    multipliers, batch statistics) as JSON-lines.
    """
    if cfg.agent == "pred-alloc":
        raise UnsupportedAgentError("pred-alloc is a heuristic; nothing to train")
    model = build_model(cfg)
    episode_cfg = build_episode_config(cfg)
    source = build_source(cfg)
    agent = make_agent(cfg, model)
    if cfg.epochs == 0:
        ckpt = checkpoint_from_agent(agent, epoch=0)
        return TrainResult(best=ckpt, last=ckpt, curves=[], best_epoch=0)
    loop = _train_wcsac if cfg.agent == "wcsac" else _train_onpolicy
    curves, tracker = loop(agent, model, episode_cfg, source, cfg.epochs,
                           cfg.episodes_per_epoch, cfg.seed, cfg.beta_thresh,
                           update_log=update_log)
    last = checkpoint_from_agent(agent, epoch=cfg.epochs - 1)
    best, best_epoch, warning = tracker.result()
    return TrainResult(best=best, last=last, curves=curves,
                       best_epoch=best_epoch, warning=warning)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def policy_from_checkpoint(ckpt: PolicyCheckpoint):
    return agent_from_checkpoint(ckpt)


DEFAULT_D_VALUES = tuple(np.arange(-3.0, 3.01, 0.5))


def sweep_conditions(policy, cfg: ExperimentConfig, model: QoSModel | None = None,
                     d_values=DEFAULT_D_VALUES, episodes: int | None = None,
                     ) -> SweepResult:
    """Evaluate under deterministic condition d for each value, plus the
    stochastic-condition reference (same episode seeds throughout)."""
    model = model if model is not None else build_model(cfg)
    source = build_source(cfg)
    episodes = episodes if episodes is not None else cfg.eval_episodes
    base = build_episode_config(cfg)
    records = []
    for d in d_values:
        ep_cfg = replace(base, condition_mode="deterministic", condition_d=float(d))
        records.append(evaluate(policy, model, ep_cfg, source, episodes,
                                cfg.seed, label=f"d={d:+.1f}", cfg_hash=config_hash(cfg)))
    ref_cfg = replace(base, condition_mode="stochastic")
    reference = evaluate(policy, model, ref_cfg, source, episodes, cfg.seed,
                         label="stochastic", cfg_hash=config_hash(cfg))
    return SweepResult("condition_d", [float(d) for d in d_values], records, reference)


DEFAULT_NOISE_VALUES = (0.0, 0.05, 0.1, 0.2, 0.4, 0.8)


def sweep_noise(policy, cfg: ExperimentConfig, model: QoSModel | None = None,
                noise_values=DEFAULT_NOISE_VALUES, episodes: int | None = None,
                ) -> SweepResult:
    """Evaluate with increasingly noisy traffic prediction, plus the
    fully-random-predictor reference."""
    model = model if model is not None else build_model(cfg)
    episodes = episodes if episodes is not None else cfg.eval_episodes
    ep_cfg = build_episode_config(cfg)
    records = []
    for sigma in noise_values:
        source = build_source(cfg, PredictorConfig("noisy", noise_sigma=float(sigma)))
        records.append(evaluate(policy, model, ep_cfg, source, episodes,
                                cfg.seed, label=f"noise={sigma:g}",
                                cfg_hash=config_hash(cfg)))
    ref_source = build_source(cfg, PredictorConfig("random"))
    reference = evaluate(policy, model, ep_cfg, ref_source, episodes,
                         cfg.seed, label="random-predictor", cfg_hash=config_hash(cfg))
    return SweepResult("noise_sigma", [float(s) for s in noise_values],
                       records, reference)


# ---------------------------------------------------------------------------
# fine-tuning
# ---------------------------------------------------------------------------

@dataclass
class FinetuneResult:
    pre: MetricsRecord
    post: MetricsRecord
    best: PolicyCheckpoint
    curves: list
    warning: str | None = None


def finetune(ckpt: PolicyCheckpoint, cfg: ExperimentConfig, epochs: int = 500,
             risk_alpha: float = 0.99, lr_scale: float = 0.1,
             condition_d: float = 1.0) -> FinetuneResult:
    """Continue training a checkpoint on a fixed deterministic condition,
    risk-neutral and at lowered learning rates; reports metrics on that
    condition before and after."""
    if ckpt.kind != "wcsac":
        raise UnsupportedAgentError(
            f"fine-tuning applies to the risk-constrained agent, not {ckpt.kind!r}")
    model = build_model(cfg)
    ft_cfg = replace(cfg, condition_mode="deterministic", condition_d=condition_d)
    episode_cfg = build_episode_config(ft_cfg)
    source = build_source(ft_cfg)

    pre_agent = agent_from_checkpoint(ckpt)
    pre = evaluate(pre_agent, model, episode_cfg, source, cfg.eval_episodes,
                   cfg.seed, label="pre-finetune", cfg_hash=config_hash(ft_cfg))
    if epochs == 0:
        return FinetuneResult(pre=pre, post=pre, best=ckpt, curves=[])

    old = WCSACConfig(**{k: tuple(v) if isinstance(v, list) else v
                         for k, v in ckpt.config.items()})
    tuned = replace(old, risk_alpha=risk_alpha,
                    lr_actor=old.lr_actor * lr_scale,
                    lr_critic=old.lr_critic * lr_scale,
                    lr_entropy=old.lr_entropy * lr_scale,
                    lr_safety=old.lr_safety * lr_scale,
                    update_after=0)
    agent = agent_from_checkpoint(
        dataclasses.replace(ckpt, config=dataclasses.asdict(tuned)))
    curves, tracker = _train_wcsac(agent, model, episode_cfg, source, epochs,
                                   cfg.episodes_per_epoch, cfg.seed,
                                   cfg.beta_thresh, stream=FINETUNE_STREAM)
    best, _, warning = tracker.result()
    post_agent = agent_from_checkpoint(best)
    post = evaluate(post_agent, model, episode_cfg, source, cfg.eval_episodes,
                    cfg.seed, label="post-finetune", cfg_hash=config_hash(ft_cfg))
    return FinetuneResult(pre=pre, post=post, best=best, curves=curves,
                          warning=warning)
