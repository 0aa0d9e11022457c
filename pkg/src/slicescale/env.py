"""Slice resource-scaling CMDP environment.

One step advances one DTI: the chosen bandwidth fraction is applied for N
TTIs, per-TTI QoS is drawn from the network model (or evaluated under a
deterministic condition d), and the step returns

* reward  = 1 - eta * bandwidth (resource efficiency),
* cost    = traffic-weighted degraded TTIs / whole-episode traffic, so the
  per-step costs of a finished episode sum exactly to the final QoS
  degradation fraction beta, and
* an observation of (next DTI's predicted traffic CDF, beta so far).

A TTI is degraded when its QoS is <= q_thresh (degraded at equality).
Zero-traffic TTIs contribute to neither numerator nor denominator and the
QoS lookup is skipped for them.

The cost denominator is the whole episode's traffic, which the simulator
knows because the episode is materialized at reset.  A streaming
deployment would have to substitute dti_count * ttis_per_dti * (mean
predicted traffic); that estimate is not implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network_model import QoSModel, deterministic_qos, sample_qos
from .traffic import EpisodeTraffic

DEFAULT_ACTION_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)


class LifecycleError(RuntimeError):
    """Raised when the environment is used out of order (step after done)."""


class ConfigurationError(ValueError):
    """Raised for invalid episode configuration or traffic input."""


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode structure, thresholds, and the action grid."""

    dti_count: int = 10
    ttis_per_dti: int = 60
    q_thresh: float = 2.0
    beta_thresh: float = 0.10
    eta: float = 1.0
    capacity: float = 1.0
    action_grid: tuple[float, ...] = DEFAULT_ACTION_GRID
    condition_mode: str = "stochastic"  # stochastic | deterministic
    condition_d: float = 0.0

    def __post_init__(self):
        if self.dti_count < 1 or self.ttis_per_dti < 1:
            raise ConfigurationError("dti_count and ttis_per_dti must be >= 1")
        if not 0.0 < self.beta_thresh < 1.0:
            raise ConfigurationError("beta_thresh must be in (0, 1)")
        if self.eta <= 0:
            raise ConfigurationError("eta must be > 0")
        grid = tuple(sorted(self.action_grid))
        if not grid:
            raise ConfigurationError("action_grid must be non-empty")
        if grid[0] <= 0 or grid[-1] > self.capacity:
            raise ConfigurationError("action_grid must lie in (0, capacity]")
        object.__setattr__(self, "action_grid", grid)
        if self.condition_mode not in ("stochastic", "deterministic"):
            raise ConfigurationError(
                f"unknown condition_mode {self.condition_mode!r}")


@dataclass(frozen=True)
class Observation:
    """Agent state: predicted traffic CDF for the next DTI + beta so far."""

    traffic_cdf: np.ndarray
    beta_so_far: float

    def __post_init__(self):
        cdf = np.asarray(self.traffic_cdf, dtype=float)
        if np.any(np.diff(cdf) < -1e-12) or abs(cdf[-1] - 1.0) > 1e-9:
            raise ValueError("traffic_cdf must be non-decreasing and end at 1")
        if not 0.0 <= self.beta_so_far <= 1.0:
            raise ValueError("beta_so_far must be in [0, 1]")
        object.__setattr__(self, "traffic_cdf", cdf)
        cdf.setflags(write=False)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.traffic_cdf, [self.beta_so_far]])

    @property
    def dim(self) -> int:
        return len(self.traffic_cdf) + 1


@dataclass
class EpisodeLedger:
    """Cumulative degradation accounting for Eq.-style beta."""

    degraded_traffic: float = 0.0
    total_traffic: float = 0.0
    episode_total_traffic: float = 0.0


def compute_beta(ledger: EpisodeLedger) -> float:
    """Traffic-weighted degradation fraction over the elapsed TTIs (0 before any traffic)."""
    if ledger.total_traffic <= 0.0:
        return 0.0
    return ledger.degraded_traffic / ledger.total_traffic


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    cost: float
    next_observation: Observation
    done: bool
    info: dict


def snap_to_grid(value: float, grid: Sequence[float]) -> float:
    """Nearest grid element; ties (within float dust) snap to the larger one."""
    grid = np.asarray(grid, dtype=float)
    dist = np.abs(grid - value)
    best = dist.min()
    return float(grid[np.nonzero(dist <= best + 1e-12)[0][-1]])


def quantize_action(raw_action: float, grid: Sequence[float] = DEFAULT_ACTION_GRID) -> float:
    """Map a raw action in [-1, 1] onto the action grid.

    Affine map of [-1, 1] onto [min(grid), max(grid)], then snap to the
    nearest grid element with ties snapping upward (QoS-conservative).
    """
    if not np.isfinite(raw_action):
        raise ValueError("raw_action must be finite")
    grid = np.asarray(grid, dtype=float)
    lo, hi = grid[0], grid[-1]
    fraction = lo + (raw_action + 1.0) * 0.5 * (hi - lo)
    return snap_to_grid(fraction, grid)


def fraction_to_raw(fraction: float, grid: Sequence[float] = DEFAULT_ACTION_GRID) -> float:
    """Inverse of the affine part of quantize_action (grid fractions round-trip)."""
    grid = np.asarray(grid, dtype=float)
    lo, hi = grid[0], grid[-1]
    return 2.0 * (fraction - lo) / (hi - lo) - 1.0


class SliceEnv:
    """Single-slice resource-scaling environment over a materialized episode.

    Single-threaded; run concurrent episodes in separate instances with
    independent RNGs.
    """

    def __init__(self, model: QoSModel, config: EpisodeConfig = EpisodeConfig()):
        self.model = model
        self.config = config
        self._episode: EpisodeTraffic | None = None
        self._rng: np.random.Generator | None = None
        self._t = 0
        self._done = True
        self.ledger = EpisodeLedger()

    def reset(self, episode: EpisodeTraffic, rng: np.random.Generator) -> Observation:
        cfg = self.config
        if episode.values.shape != (cfg.dti_count, cfg.ttis_per_dti):
            raise ConfigurationError(
                f"episode traffic shape {episode.values.shape} does not match "
                f"({cfg.dti_count}, {cfg.ttis_per_dti})")
        self._episode = episode
        self._rng = rng
        self._t = 0
        self._done = False
        self.ledger = EpisodeLedger(
            episode_total_traffic=float(episode.values.sum()))
        return Observation(episode.dists[0].cdf, 0.0)

    def quantize_action(self, raw_action: float) -> float:
        return quantize_action(raw_action, self.config.action_grid)

    def step(self, raw_action: float) -> StepOutcome:
        if self._done or self._episode is None:
            raise LifecycleError("step() called on a finished episode; reset() first")
        cfg = self.config
        bandwidth = self.quantize_action(raw_action)
        assert bandwidth <= cfg.capacity

        x = self._episode.values[self._t]
        active = x > 0.0
        qos = np.full(len(x), np.nan)
        if np.any(active):
            if cfg.condition_mode == "stochastic":
                qos[active] = sample_qos(self.model, x[active], bandwidth, self._rng)
            else:
                qos[active] = deterministic_qos(self.model, x[active], bandwidth,
                                                cfg.condition_d)
        degraded = np.zeros(len(x), dtype=bool)
        degraded[active] = qos[active] <= cfg.q_thresh

        degraded_traffic = float(x[degraded].sum())
        self.ledger.degraded_traffic += degraded_traffic
        self.ledger.total_traffic += float(x.sum())

        reward = 1.0 - cfg.eta * bandwidth
        total = self.ledger.episode_total_traffic
        cost = degraded_traffic / total if total > 0 else 0.0
        beta = compute_beta(self.ledger)

        self._t += 1
        self._done = self._t >= cfg.dti_count
        cdf_index = min(self._t, cfg.dti_count - 1)
        next_obs = Observation(self._episode.dists[cdf_index].cdf, beta)
        info = {
            "dti": self._t - 1,
            "bandwidth": bandwidth,
            "qos": qos,
            "degraded": degraded,
            "traffic": x,
            "beta": beta,
        }
        return StepOutcome(reward, cost, next_obs, self._done, info)

    @property
    def done(self) -> bool:
        return self._done

    def beta(self) -> float:
        return compute_beta(self.ledger)
