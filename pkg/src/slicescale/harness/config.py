"""Experiment configuration: a flat key = value file format mirroring
ExperimentConfig, plus builders that turn a config into the model, traffic
source, episode config, and agent.

Dotted keys override agent hyperparameters, e.g. ``wcsac.risk_alpha = 0.99``
or ``cpo.trust_region_bound = 0.02``; the prefix must match the configured
agent kind (its family for wc-cpo).  Paths may use ``builtin:diurnal`` for
the bundled trace and ``builtin:truth`` for the exact calibrated QoS grid.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from ..env import EpisodeConfig
from ..network_model import (QoSModel, calibrated_config, load_model,
                             truth_model)
from ..traffic import (ConstantSource, PredictorConfig, RandomizedSource,
                       TraceSource, builtin_trace_path, parse_trace_csv)

AGENT_KINDS = ("wcsac", "cpo", "wc-cpo", "ppo", "pred-alloc")


class ConfigError(ValueError):
    """Raised for unknown keys or malformed config files."""


@dataclass(frozen=True)
class ExperimentConfig:
    agent: str = "wcsac"
    seed: int = 1
    out_dir: str = "runs/out"
    epochs: int = 300
    episodes_per_epoch: int = 10
    eval_episodes: int = 100
    # episode structure
    dti_count: int = 10
    ttis_per_dti: int = 60
    q_thresh: float = 2.0
    beta_thresh: float = 0.10
    condition_mode: str = "stochastic"
    condition_d: float = 0.0
    # traffic source
    traffic_source: str = "trace"  # trace | dr | constant
    trace_path: str = "builtin:diurnal"
    scale_low: float = 1.0
    scale_high: float = 3.0
    trace_noise_sigma: float = 0.75
    trace_noise_mode: str = "per-episode"  # per-episode | frozen
    trace_noise_seed: int = 2023
    traffic_offset: float = 0.0
    constant_level: float = 5.0
    dr_redraw_per_dti: bool = True
    # prediction oracle
    predictor_mode: str = "perfect"
    predictor_noise_sigma: float = 0.0
    # network model
    model_path: str = "builtin:truth"
    # per-agent hyperparameter overrides (from dotted keys)
    agent_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"unknown agent {self.agent!r}; expected one of {AGENT_KINDS}")
        if self.traffic_source not in ("trace", "dr", "constant"):
            raise ConfigError(f"unknown traffic_source {self.traffic_source!r}")

    def hash(self) -> str:
        return config_hash(self)


def config_hash(cfg: ExperimentConfig) -> str:
    canon = repr(sorted(dataclasses.asdict(cfg).items()))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_AGENT_PREFIXES = ("wcsac", "cpo", "wc-cpo", "ppo")


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    """Parse a flat key = value config file ('#' starts a comment)."""
    path = Path(path)
    values: dict = {}
    agent_params: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if "." in key:
            prefix, name = key.split(".", 1)
            if prefix not in _AGENT_PREFIXES:
                raise ConfigError(f"{path}:{lineno}: unknown agent prefix {prefix!r}")
            agent_params[name] = _parse_value(raw)
        elif key in _FIELDS:
            values[key] = _parse_value(raw)
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    if agent_params:
        values["agent_params"] = agent_params
    values.update(overrides)
    return ExperimentConfig(**values)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    path = Path(path)
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name == "agent_params":
            lines.extend(f"{cfg.agent.split('-')[-1] if cfg.agent != 'wc-cpo' else 'cpo'}.{k} = {v}"
                         for k, v in value.items())
            continue
        lines.append(f"{f.name} = {value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_model(cfg: ExperimentConfig) -> QoSModel:
    if cfg.model_path == "builtin:truth":
        return truth_model(calibrated_config())
    return load_model(cfg.model_path)


def build_episode_config(cfg: ExperimentConfig) -> EpisodeConfig:
    return EpisodeConfig(
        dti_count=cfg.dti_count, ttis_per_dti=cfg.ttis_per_dti,
        q_thresh=cfg.q_thresh, beta_thresh=cfg.beta_thresh,
        condition_mode=cfg.condition_mode, condition_d=cfg.condition_d,
    )


def build_predictor(cfg: ExperimentConfig) -> PredictorConfig:
    return PredictorConfig(mode=cfg.predictor_mode,
                           noise_sigma=cfg.predictor_noise_sigma)


def build_source(cfg: ExperimentConfig, predictor: PredictorConfig | None = None):
    predictor = predictor if predictor is not None else build_predictor(cfg)
    if cfg.traffic_source == "dr":
        return RandomizedSource(redraw_per_dti=cfg.dr_redraw_per_dti)
    if cfg.traffic_source == "constant":
        return ConstantSource(cfg.constant_level, predictor=predictor)
    trace = cfg.trace_path
    base = parse_trace_csv(builtin_trace_path() if trace == "builtin:diurnal" else trace)
    return TraceSource(base, scale_to=(cfg.scale_low, cfg.scale_high),
                       noise_sigma=cfg.trace_noise_sigma, offset=cfg.traffic_offset,
                       predictor=predictor, noise_mode=cfg.trace_noise_mode,
                       noise_seed=cfg.trace_noise_seed)


def make_agent(cfg: ExperimentConfig, model: QoSModel | None = None,
               obs_dim: int = 6, act_dim: int = 1):
    """Instantiate the configured decision-maker.

    Gradient agents get their cost limit tied to beta_thresh unless
    explicitly overridden; pred-alloc needs the QoS model.
    """
    from ..agents import (CPOAgent, CPOConfig, PPOAgent, PPOConfig,
                          PredAllocPolicy, WCSACAgent, WCSACConfig)

    params = dict(cfg.agent_params)
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    if cfg.agent == "wcsac":
        params.setdefault("cost_limit", cfg.beta_thresh)
        return WCSACAgent(obs_dim, act_dim, WCSACConfig(**params), seed=cfg.seed)
    if cfg.agent in ("cpo", "wc-cpo"):
        params.setdefault("cost_limit", cfg.beta_thresh)
        if cfg.agent == "wc-cpo":
            params.setdefault("shaping_gamma", 10.0)
        return CPOAgent(obs_dim, act_dim, CPOConfig(**params), seed=cfg.seed)
    if cfg.agent == "ppo":
        return PPOAgent(obs_dim, act_dim, PPOConfig(**params), seed=cfg.seed)
    if model is None:
        raise ConfigError("pred-alloc needs the QoS model")
    return PredAllocPolicy(model, q_thresh=cfg.q_thresh,
                           worst_case_magnitude=params.get("worst_case_magnitude", 2.0))
