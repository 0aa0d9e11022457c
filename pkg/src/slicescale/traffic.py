"""Traffic traces, per-DTI distributions, and prediction oracles.

Two traffic generators feed the simulator:

* trace replay: a real or synthetic time series (CSV ``timestamp,value``)
  min-max scaled to a target user range, optionally offset, with truncated
  Gaussian per-TTI noise so values stay inside the prediction support; and
* domain randomization (DR): per-DTI traffic drawn i.i.d. from a randomized
  discrete distribution (truncated-Gaussian family over the support).

Prediction oracles turn the next DTI's actual traffic into the
distribution the agent observes: perfect (empirical pmf), noisy (per-bin
Gaussian perturbation, clipped and renormalized), or fully random
(uniform over the support).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

SUPPORT_LEVELS = np.arange(1.0, 6.0)  # users/sec levels {1..5}
SUPPORT_BOUNDS = (1.0, 5.0)

TRACE_CSV_HEADER = ["timestamp", "value"]


class TraceFormatError(ValueError):
    """Raised when a trace CSV is malformed."""


class ScalingError(ValueError):
    """Raised when a series cannot be min-max scaled (empty or constant)."""


@dataclass(frozen=True)
class TrafficTrace:
    """Per-TTI traffic series in users/sec."""

    values: np.ndarray
    tti_seconds: float = 1.0
    dti_ttis: int = 60

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if np.any(self.values < 0):
            raise ValueError("traffic values must be >= 0")
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TrafficDistribution:
    """Discrete traffic distribution over the support levels (pmf + cdf)."""

    support: np.ndarray
    pmf: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        pmf = np.asarray(self.pmf, dtype=float)
        if support.shape != pmf.shape or support.ndim != 1:
            raise ValueError("support and pmf must be matching 1-D arrays")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be >= 0")
        if abs(pmf.sum() - 1.0) > 1e-9:
            raise ValueError(f"pmf must sum to 1, got {pmf.sum()!r}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "cdf", np.cumsum(pmf))
        support.setflags(write=False)
        pmf.setflags(write=False)
        self.cdf.setflags(write=False)

    cdf: np.ndarray = field(init=False)


@dataclass(frozen=True)
class PredictorConfig:
    """Traffic-prediction oracle settings.

    noise_sigma is the standard deviation of the per-bin probability-mass
    perturbation used in noisy mode.
    """

    mode: str = "perfect"  # perfect | noisy | random
    noise_sigma: float = 0.0
    support_bounds: tuple[float, float] = SUPPORT_BOUNDS

    def __post_init__(self):
        if self.mode not in ("perfect", "noisy", "random"):
            raise ValueError(f"unknown predictor mode {self.mode!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        lo, hi = self.support_bounds
        if not lo < hi:
            raise ValueError("support_bounds must satisfy min < max")


# ---------------------------------------------------------------------------
# Trace loading
# ---------------------------------------------------------------------------

def parse_trace_csv(path: str | Path) -> np.ndarray:
    """Values column of a ``timestamp,value`` CSV; timestamps only fix the order."""
    path = Path(path)
    values = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != TRACE_CSV_HEADER:
            raise TraceFormatError(f"{path}:1: expected header {','.join(TRACE_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise TraceFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                values.append(float(row[1]))
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
    return np.asarray(values, dtype=float)


def scale_series(values: np.ndarray, low: float, high: float) -> np.ndarray:
    """Min-max scale onto [low, high]; order-preserving."""
    values = np.asarray(values, dtype=float)
    if high <= low:
        raise ValueError("scale_to requires high > low")
    if len(values) == 0:
        raise ScalingError("cannot scale an empty series")
    vmin, vmax = values.min(), values.max()
    if vmax == vmin:
        raise ScalingError("cannot scale a constant series")
    return low + (values - vmin) * (high - low) / (vmax - vmin)


def truncated_noise(values: np.ndarray, noise_sigma: float,
                    bounds: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    """Add N(0, noise_sigma^2) per value, truncated so results stay in bounds."""
    values = np.asarray(values, dtype=float)
    if noise_sigma == 0.0:
        return values.copy()
    lo, hi = bounds
    a = (np.maximum(lo, 0.0) - values) / noise_sigma  # traffic stays non-negative too
    b = (hi - values) / noise_sigma
    noise = stats.truncnorm.rvs(a, b, scale=noise_sigma, size=len(values), random_state=rng)
    return np.clip(values + noise, lo, hi)  # clip only sweeps float dust at the bounds


def load_trace(path: str | Path, scale_to: tuple[float, float] = (1.0, 3.0),
               noise_sigma: float = 0.75, offset: float = 0.0,
               rng: np.random.Generator | None = None,
               support_bounds: tuple[float, float] = SUPPORT_BOUNDS,
               tti_seconds: float = 1.0, dti_ttis: int = 60) -> TrafficTrace:
    """Load, scale, offset, and noise a trace CSV.

    Pipeline: min-max scale to ``scale_to``, add ``offset``, then add
    per-TTI truncated Gaussian noise that keeps every value inside
    ``support_bounds`` (offset=2 on a (1,3)-scaled trace reproduces the
    3-to-5 users/sec evaluation traffic).
    """
    values = scale_series(parse_trace_csv(path), *scale_to)
    values = values + offset
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        values = truncated_noise(values, noise_sigma, support_bounds, rng)
    return TrafficTrace(values, tti_seconds=tti_seconds, dti_ttis=dti_ttis)


# ---------------------------------------------------------------------------
# Domain-randomized distributions
# ---------------------------------------------------------------------------

def discretized_truncnorm_pmf(center: float, spread: float,
                              support: np.ndarray = SUPPORT_LEVELS) -> TrafficDistribution:
    """Gaussian density evaluated at the support levels, renormalized."""
    if spread <= 0:
        raise ValueError("spread must be > 0")
    z = (np.asarray(support, dtype=float) - center) / spread
    weights = np.exp(-0.5 * np.square(z))
    total = weights.sum()
    if total <= 0 or not np.isfinite(total):
        # extreme spread->0 with off-support center: collapse to nearest level
        weights = np.zeros_like(z)
        weights[np.argmin(np.abs(z))] = 1.0
        total = 1.0
    return TrafficDistribution(support, weights / total)


def randomize_dti_distribution(rng: np.random.Generator,
                               center_range: tuple[float, float] = (1.0, 5.0),
                               spread_range: tuple[float, float] = (0.25, 1.5),
                               support: np.ndarray = SUPPORT_LEVELS) -> TrafficDistribution:
    """One member of the DR family: truncated Gaussian with random center/spread."""
    center = rng.uniform(*center_range)
    spread = rng.uniform(*spread_range)
    return discretized_truncnorm_pmf(center, spread, support)


def sample_dti_traffic(dist: TrafficDistribution, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from the distribution's pmf."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.choice(dist.support, size=n, p=dist.pmf)


# ---------------------------------------------------------------------------
# Prediction oracles
# ---------------------------------------------------------------------------

def empirical_pmf(values: Sequence[float],
                  support: np.ndarray = SUPPORT_LEVELS) -> TrafficDistribution:
    """Empirical pmf of values rounded to the nearest support level."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise ValueError("cannot build a pmf from an empty DTI")
    support = np.asarray(support, dtype=float)
    rounded = np.clip(np.rint(values), support[0], support[-1])
    idx = np.searchsorted(support, rounded)
    pmf = np.bincount(idx, minlength=len(support)).astype(float)
    return TrafficDistribution(support, pmf / pmf.sum())


def predict_cdf(actual_next_dti: Sequence[float], config: PredictorConfig,
                rng: np.random.Generator | None = None,
                support: np.ndarray = SUPPORT_LEVELS) -> TrafficDistribution:
    """Predicted traffic distribution for the next DTI.

    perfect: empirical pmf of the actual values; noisy: perfect pmf plus
    per-bin N(0, noise_sigma^2), clipped at 0 and renormalized; random:
    uniform over the support, ignoring the input.
    """
    support = np.asarray(support, dtype=float)
    if config.mode == "random":
        return TrafficDistribution(support, np.full(len(support), 1.0 / len(support)))
    dist = empirical_pmf(actual_next_dti, support)
    if config.mode == "perfect" or config.noise_sigma == 0.0:
        return dist
    if rng is None:
        raise ValueError("noisy prediction requires an rng")
    noisy = np.maximum(dist.pmf + rng.normal(0.0, config.noise_sigma, size=len(support)), 0.0)
    total = noisy.sum()
    if total <= 0:
        return TrafficDistribution(support, np.full(len(support), 1.0 / len(support)))
    return TrafficDistribution(support, noisy / total)


def peak_of(dist_or_trace) -> float:
    """Peak traffic: max of a trace/array, or the top supported level of a pmf."""
    if isinstance(dist_or_trace, TrafficDistribution):
        carrying = dist_or_trace.support[dist_or_trace.pmf > 0.0]
        return float(carrying[-1])
    values = dist_or_trace.values if isinstance(dist_or_trace, TrafficTrace) \
        else np.asarray(dist_or_trace, dtype=float)
    if len(values) == 0:
        raise ValueError("cannot take the peak of an empty trace")
    return float(values.max())


# ---------------------------------------------------------------------------
# Episode-level traffic sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeTraffic:
    """Materialized traffic for one episode.

    values has shape (dti_count, ttis_per_dti); dists holds the per-DTI
    distribution the agent observes (the generating distribution in DR mode,
    a prediction-oracle output in trace mode).
    """

    values: np.ndarray
    dists: tuple[TrafficDistribution, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("episode traffic must be (dti_count, ttis_per_dti)")
        if len(self.dists) != values.shape[0]:
            raise ValueError("need one distribution per DTI")
        object.__setattr__(self, "values", values)
        values.setflags(write=False)


class TraceSource:
    """Episode traffic replayed from a scaled base series.

    Episode i replays the window starting at i * stride (cyclic); the
    agent-facing distributions come from the prediction oracle in
    ``predictor``.  Two noise modes:

    * ``per-episode``: fresh truncated noise on every episode's window
      (robustness evaluations over a traffic *pattern*);
    * ``frozen``: noise drawn once at construction from ``noise_seed``,
      yielding one fixed traffic curve that episodes replay verbatim (the
      train-and-test-on-the-same-curve protocol).
    """

    def __init__(self, base_values: np.ndarray, scale_to: tuple[float, float] = (1.0, 3.0),
                 noise_sigma: float = 0.75, offset: float = 0.0,
                 predictor: PredictorConfig = PredictorConfig(),
                 support_bounds: tuple[float, float] = SUPPORT_BOUNDS,
                 window_stride: int | None = None,
                 noise_mode: str = "per-episode", noise_seed: int = 2023):
        if noise_mode not in ("per-episode", "frozen"):
            raise ValueError(f"unknown noise_mode {noise_mode!r}")
        self.base = scale_series(np.asarray(base_values, dtype=float), *scale_to) + offset
        self.noise_sigma = noise_sigma
        self.predictor = predictor
        self.support_bounds = support_bounds
        self.window_stride = window_stride
        self.noise_mode = noise_mode
        if noise_mode == "frozen" and noise_sigma > 0.0:
            self.base = truncated_noise(self.base, noise_sigma, support_bounds,
                                        np.random.default_rng(noise_seed))

    @classmethod
    def from_csv(cls, path: str | Path, **kwargs) -> "TraceSource":
        return cls(parse_trace_csv(path), **kwargs)

    def episode(self, dti_count: int, ttis_per_dti: int, episode_index: int,
                rng: np.random.Generator) -> EpisodeTraffic:
        length = dti_count * ttis_per_dti
        if len(self.base) < length:
            raise ValueError(
                f"trace has {len(self.base)} TTIs, episode needs {length}")
        stride = self.window_stride if self.window_stride is not None else length
        start = (episode_index * stride) % (len(self.base) - length + 1)
        window = self.base[start:start + length]
        if self.noise_mode == "per-episode" and self.noise_sigma > 0.0:
            window = truncated_noise(window, self.noise_sigma, self.support_bounds, rng)
        values = window.reshape(dti_count, ttis_per_dti)
        dists = tuple(predict_cdf(values[t], self.predictor, rng) for t in range(dti_count))
        return EpisodeTraffic(values, dists)


class RandomizedSource:
    """Domain-randomized episode traffic.

    Draws a fresh distribution per DTI (or one per episode when
    redraw_per_dti is False) and samples that DTI's TTIs i.i.d. from it;
    the generating distribution itself is what the agent observes.
    """

    def __init__(self, redraw_per_dti: bool = True,
                 center_range: tuple[float, float] = (1.0, 5.0),
                 spread_range: tuple[float, float] = (0.25, 1.5)):
        self.redraw_per_dti = redraw_per_dti
        self.center_range = center_range
        self.spread_range = spread_range

    def episode(self, dti_count: int, ttis_per_dti: int, episode_index: int,
                rng: np.random.Generator) -> EpisodeTraffic:
        dists = []
        values = np.empty((dti_count, ttis_per_dti))
        dist = None
        for t in range(dti_count):
            if dist is None or self.redraw_per_dti:
                dist = randomize_dti_distribution(rng, self.center_range, self.spread_range)
            dists.append(dist)
            values[t] = sample_dti_traffic(dist, ttis_per_dti, rng)
        return EpisodeTraffic(values, tuple(dists))


class ConstantSource:
    """Fixed traffic level every TTI (diagnostics and unit tests)."""

    def __init__(self, level: float, predictor: PredictorConfig = PredictorConfig()):
        self.level = float(level)
        self.predictor = predictor

    def episode(self, dti_count: int, ttis_per_dti: int, episode_index: int,
                rng: np.random.Generator) -> EpisodeTraffic:
        values = np.full((dti_count, ttis_per_dti), self.level)
        dists = tuple(predict_cdf(values[t], self.predictor, rng) for t in range(dti_count))
        return EpisodeTraffic(values, dists)


# ---------------------------------------------------------------------------
# Bundled synthetic diurnal pattern
# ---------------------------------------------------------------------------

def synthetic_diurnal_series(n: int = 43200, seed: int = 20230915) -> np.ndarray:
    """Two-peak diurnal load curve with smoothed noise, in arbitrary units.

    Stands in for a real city-scale Internet-activity trace; the loader
    min-max scales it anyway, so only the shape matters.
    """
    rng = np.random.default_rng(seed)
    tau = np.linspace(0.0, 1.0, n, endpoint=False)
    base = 0.5 + 0.28 * np.sin(2 * np.pi * tau - 2.2) + 0.22 * np.sin(4 * np.pi * tau - 0.8)
    rough = rng.normal(0.0, 1.0, size=n)
    kernel = np.exp(-0.5 * np.square(np.linspace(-3, 3, 601)))
    kernel /= kernel.sum()
    smooth = np.convolve(np.concatenate([rough[-300:], rough, rough[:300]]),
                         kernel, mode="same")[300:-300]
    return np.clip(base + 0.05 * smooth, 0.0, 1.0)


def builtin_trace_path() -> Path:
    """Path of the bundled diurnal trace CSV."""
    return Path(__file__).parent / "data" / "diurnal_trace.csv"


def write_trace_csv(values: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for i, v in enumerate(values):
            writer.writerow([i, f"{v:.6f}"])
