"""Grid-based QoS network model.

Maps (traffic in users/sec, bandwidth fraction) to a per-TTI QoS
distribution N(mu, sigma), fitted from measurement samples on a fixed
(traffic, bandwidth) grid and queried by bilinear interpolation.  Also
provides the calibrated synthetic ground truth that stands in for a
physical testbed: a saturating-exponential fair-share curve

    mu*(x, r) = f_max * (1 - exp(-lam * r / x)),   sigma* = rho * mu* + sigma0

calibrated so that the deterministic worst-case QoS (condition magnitude 2)
at 5 users/sec and 80% bandwidth is exactly 2.0 Fps.

Network-condition convention: deterministic QoS under condition d is
max(0, mu + d * sigma).  Smaller d is worse; d = -2 is the near-worst case
used for provisioning, d = +3 the best case.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TRAFFIC_AXIS = (1.0, 2.0, 3.0, 4.0, 5.0)
DEFAULT_BANDWIDTH_AXIS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)

MODEL_CSV_HEADER = ["traffic", "bandwidth", "mu", "sigma", "count"]
SAMPLE_CSV_HEADER = ["traffic", "bandwidth", "qos"]


class ModelFormatError(ValueError):
    """Raised when a model or sample CSV file is malformed."""


class FittingError(ValueError):
    """Raised when grid samples are insufficient or off-grid."""


class CalibrationError(ValueError):
    """Raised when a synthetic-truth config is used before calibration."""


@dataclass(frozen=True)
class QoSSample:
    """One measured QoS point: traffic (users/sec), bandwidth fraction, QoS (Fps)."""

    traffic: float
    bandwidth: float
    qos: float

    def __post_init__(self):
        if self.traffic < 0:
            raise ValueError(f"traffic must be >= 0, got {self.traffic}")
        if not 0.0 <= self.bandwidth <= 1.0:
            raise ValueError(f"bandwidth must be in [0, 1], got {self.bandwidth}")
        if self.qos < 0:
            raise ValueError(f"qos must be >= 0, got {self.qos}")


@dataclass(frozen=True)
class QoSGridCell:
    """Fitted Gaussian QoS parameters at one grid node."""

    traffic: float
    bandwidth: float
    mu: float
    sigma: float
    count: int

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


class QoSModel:
    """Immutable grid of Gaussian QoS parameters with bilinear interpolation.

    Queries outside the grid clamp to the nearest axis bound; queries at a
    grid node return the stored cell values bit-exactly.  Safe to share
    across concurrent readers; sampling takes an explicit RNG.
    """

    def __init__(self, traffic_axis: Sequence[float], bandwidth_axis: Sequence[float],
                 mu: np.ndarray, sigma: np.ndarray, count: np.ndarray):
        self.traffic_axis = np.asarray(traffic_axis, dtype=float)
        self.bandwidth_axis = np.asarray(bandwidth_axis, dtype=float)
        if self.traffic_axis.ndim != 1 or len(self.traffic_axis) < 1:
            raise ValueError("traffic_axis must be a non-empty 1-D sequence")
        if self.bandwidth_axis.ndim != 1 or len(self.bandwidth_axis) < 1:
            raise ValueError("bandwidth_axis must be a non-empty 1-D sequence")
        if np.any(np.diff(self.traffic_axis) <= 0) or np.any(np.diff(self.bandwidth_axis) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        shape = (len(self.traffic_axis), len(self.bandwidth_axis))
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.count = np.asarray(count, dtype=int)
        for name, arr in (("mu", self.mu), ("sigma", self.sigma), ("count", self.count)):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if np.any(self.sigma < 0):
            raise ValueError("all cell sigmas must be >= 0")
        self.mu.setflags(write=False)
        self.sigma.setflags(write=False)
        self.count.setflags(write=False)
        self.traffic_axis.setflags(write=False)
        self.bandwidth_axis.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.traffic_axis), len(self.bandwidth_axis))

    def cell(self, i: int, j: int) -> QoSGridCell:
        return QoSGridCell(
            traffic=float(self.traffic_axis[i]),
            bandwidth=float(self.bandwidth_axis[j]),
            mu=float(self.mu[i, j]),
            sigma=float(self.sigma[i, j]),
            count=int(self.count[i, j]),
        )

    def cells(self) -> Iterable[QoSGridCell]:
        for i in range(len(self.traffic_axis)):
            for j in range(len(self.bandwidth_axis)):
                yield self.cell(i, j)


def _interp_weights(axis: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bracketing indices (i0, i1) and weight t in [0, 1] for clamped linear interpolation."""
    q = np.clip(q, axis[0], axis[-1])
    i1 = np.searchsorted(axis, q, side="left")
    i1 = np.clip(i1, 0, len(axis) - 1)
    i0 = np.maximum(i1 - 1, 0)
    span = axis[i1] - axis[i0]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(span > 0, (q - axis[i0]) / np.where(span > 0, span, 1.0), 0.0)
    return i0, i1, t


def predict(model: QoSModel, traffic, bandwidth) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated (mu, sigma) at the query point(s).

    Accepts scalars or arrays (broadcast together).  Out-of-grid queries
    clamp to the axis bounds; exact node queries return stored values
    bit-exactly (interpolation weights collapse to 0/1).
    """
    traffic = np.asarray(traffic, dtype=float)
    bandwidth = np.asarray(bandwidth, dtype=float)
    traffic, bandwidth = np.broadcast_arrays(traffic, bandwidth)
    ti0, ti1, tt = _interp_weights(model.traffic_axis, traffic)
    bi0, bi1, tb = _interp_weights(model.bandwidth_axis, bandwidth)

    def bilinear(grid: np.ndarray) -> np.ndarray:
        row0 = (1.0 - tb) * grid[ti0, bi0] + tb * grid[ti0, bi1]
        row1 = (1.0 - tb) * grid[ti1, bi0] + tb * grid[ti1, bi1]
        return (1.0 - tt) * row0 + tt * row1

    return bilinear(model.mu), bilinear(model.sigma)


def sample_qos(model: QoSModel, traffic, bandwidth, rng: np.random.Generator) -> np.ndarray:
    """One Gaussian QoS draw per query point, truncated below at 0 Fps."""
    mu, sigma = predict(model, traffic, bandwidth)
    draw = rng.normal(mu, sigma)
    return np.maximum(draw, 0.0)


def deterministic_qos(model: QoSModel, traffic, bandwidth, d: float) -> np.ndarray:
    """QoS under a deterministic network condition d: max(0, mu + d * sigma).

    Smaller d is worse (d = -3 near worst case, d = +3 best case); d = 0
    returns the model mean.
    """
    mu, sigma = predict(model, traffic, bandwidth)
    return np.maximum(mu + d * sigma, 0.0)


def fit_from_samples(samples: Sequence[QoSSample],
                     traffic_axis: Sequence[float] = DEFAULT_TRAFFIC_AXIS,
                     bandwidth_axis: Sequence[float] = DEFAULT_BANDWIDTH_AXIS) -> QoSModel:
    """Aggregate per-node samples into a QoSModel.

    Every sample must sit exactly on a grid node and every node needs at
    least 2 samples (unbiased sample standard deviation, ddof=1).
    """
    t_axis = np.asarray(traffic_axis, dtype=float)
    b_axis = np.asarray(bandwidth_axis, dtype=float)
    t_index = {v: i for i, v in enumerate(t_axis)}
    b_index = {v: j for j, v in enumerate(b_axis)}
    buckets: dict[tuple[int, int], list[float]] = {}
    for s in samples:
        if s.traffic not in t_index or s.bandwidth not in b_index:
            raise FittingError(
                f"sample at (traffic={s.traffic}, bandwidth={s.bandwidth}) is not on the grid")
        buckets.setdefault((t_index[s.traffic], b_index[s.bandwidth]), []).append(s.qos)

    mu = np.zeros((len(t_axis), len(b_axis)))
    sigma = np.zeros_like(mu)
    count = np.zeros(mu.shape, dtype=int)
    for i, tv in enumerate(t_axis):
        for j, bv in enumerate(b_axis):
            vals = buckets.get((i, j))
            n = 0 if vals is None else len(vals)
            if n < 2:
                raise FittingError(
                    f"node (traffic={tv}, bandwidth={bv}) has {n} samples, need >= 2")
            arr = np.asarray(vals, dtype=float)
            mu[i, j] = arr.mean()
            sigma[i, j] = arr.std(ddof=1)
            count[i, j] = n
    return QoSModel(t_axis, b_axis, mu, sigma, count)


# ---------------------------------------------------------------------------
# Synthetic ground truth (testbed stand-in)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticTruthConfig:
    """Parameters of the synthetic ground-truth QoS surface.

    mu*(x, r) = f_max * (1 - exp(-lam * r / x)); sigma* = rho * mu* + sigma0.
    ``lam`` must be calibrated (see :func:`calibrate_lambda`) so that
    mu*(anchor) - anchor_magnitude * sigma*(anchor) == anchor_qos.
    """

    f_max: float = 20.0
    rho: float = 0.15
    sigma0: float = 0.05
    lam: float | None = None
    anchor_traffic: float = 5.0
    anchor_bandwidth: float = 0.8
    anchor_magnitude: float = 2.0
    anchor_qos: float = 2.0

    def __post_init__(self):
        if self.f_max <= 0:
            raise ValueError("f_max must be > 0")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be >= 0")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lam must be > 0")

    def anchor_residual(self) -> float:
        """mu - m*sigma at the anchor minus the target QoS (0 when calibrated)."""
        if self.lam is None:
            raise CalibrationError("config has no rate constant; call calibrated() first")
        mu = synthetic_mu(self, self.anchor_traffic, self.anchor_bandwidth)
        sig = synthetic_sigma(self, self.anchor_traffic, self.anchor_bandwidth)
        return (mu - self.anchor_magnitude * sig) - self.anchor_qos

    def is_calibrated(self, tol: float = 1e-6) -> bool:
        return self.lam is not None and abs(self.anchor_residual()) <= tol


def synthetic_mu(config: SyntheticTruthConfig, traffic, bandwidth) -> np.ndarray:
    """Ground-truth mean QoS; strictly increasing in bandwidth, decreasing in traffic (x > 0)."""
    if config.lam is None:
        raise CalibrationError("config has no rate constant; call calibrated() first")
    x = np.asarray(traffic, dtype=float)
    r = np.asarray(bandwidth, dtype=float)
    if np.any(x <= 0):
        raise ValueError("synthetic truth requires traffic > 0")
    return config.f_max * (1.0 - np.exp(-config.lam * r / x))


def synthetic_sigma(config: SyntheticTruthConfig, traffic, bandwidth) -> np.ndarray:
    return config.rho * synthetic_mu(config, traffic, bandwidth) + config.sigma0


def calibrate_lambda(config: SyntheticTruthConfig, tol: float = 1e-12,
                     max_iter: int = 200) -> float:
    """Solve for the rate constant by bisection on the anchor residual.

    The residual mu*(anchor) - m*sigma*(anchor) - q_anchor is strictly
    increasing in lam, so plain bisection on an expanding bracket suffices.
    """
    target_mu = (config.anchor_qos + config.anchor_magnitude * config.sigma0) / \
        (1.0 - config.anchor_magnitude * config.rho)
    if not 0.0 < target_mu < config.f_max:
        raise CalibrationError(
            f"anchor is unreachable: required mean QoS {target_mu} outside (0, f_max)")

    def residual(lam: float) -> float:
        probe = replace(config, lam=lam)
        return probe.anchor_residual()

    lo, hi = 1e-9, 1.0
    while residual(hi) < 0:
        hi *= 2.0
        if hi > 1e9:
            raise CalibrationError("failed to bracket the rate constant")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def calibrated_config(f_max: float = 20.0, rho: float = 0.15, sigma0: float = 0.05,
                      **anchor) -> SyntheticTruthConfig:
    """A SyntheticTruthConfig with its rate constant solved for the anchor."""
    base = SyntheticTruthConfig(f_max=f_max, rho=rho, sigma0=sigma0, lam=None, **anchor)
    lam = calibrate_lambda(base)
    return replace(base, lam=lam)


def truth_model(config: SyntheticTruthConfig,
                traffic_axis: Sequence[float] = DEFAULT_TRAFFIC_AXIS,
                bandwidth_axis: Sequence[float] = DEFAULT_BANDWIDTH_AXIS) -> QoSModel:
    """Exact-grid QoSModel holding the analytic truth values (count = 0)."""
    if not config.is_calibrated():
        raise CalibrationError("synthetic truth config is not calibrated")
    t_axis = np.asarray(traffic_axis, dtype=float)
    b_axis = np.asarray(bandwidth_axis, dtype=float)
    tt, bb = np.meshgrid(t_axis, b_axis, indexing="ij")
    mu = synthetic_mu(config, tt, bb)
    sigma = synthetic_sigma(config, tt, bb)
    return QoSModel(t_axis, b_axis, mu, sigma, np.zeros(mu.shape, dtype=int))


def generate_synthetic_grid(config: SyntheticTruthConfig, samples_per_cell: int,
                            rng: np.random.Generator,
                            traffic_axis: Sequence[float] = DEFAULT_TRAFFIC_AXIS,
                            bandwidth_axis: Sequence[float] = DEFAULT_BANDWIDTH_AXIS,
                            ) -> list[QoSSample]:
    """Draw grid-search measurement samples from the calibrated truth surface.

    Emits samples_per_cell independent N(mu*, sigma*) draws per node,
    truncated below at 0, in (traffic, bandwidth, draw-index) order.
    """
    if not config.is_calibrated():
        raise CalibrationError("synthetic truth config is not calibrated")
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be >= 1")
    samples = []
    for tv in traffic_axis:
        for bv in bandwidth_axis:
            mu = float(synthetic_mu(config, tv, bv))
            sig = float(synthetic_sigma(config, tv, bv))
            draws = np.maximum(rng.normal(mu, sig, size=samples_per_cell), 0.0)
            samples.extend(QoSSample(float(tv), float(bv), float(q)) for q in draws)
    return samples


# ---------------------------------------------------------------------------
# Persistence (CSV grid format)
# ---------------------------------------------------------------------------

def save_model(model: QoSModel, path: str | Path) -> None:
    """Write the grid as CSV rows ``traffic,bandwidth,mu,sigma,count`` sorted by node."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MODEL_CSV_HEADER)
        for cell in model.cells():
            writer.writerow([repr(cell.traffic), repr(cell.bandwidth),
                             repr(cell.mu), repr(cell.sigma), cell.count])


def load_model(path: str | Path) -> QoSModel:
    """Read a model CSV, validating grid completeness. Inverse of :func:`save_model`."""
    path = Path(path)
    rows: dict[tuple[float, float], tuple[float, float, int]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ModelFormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != MODEL_CSV_HEADER:
            raise ModelFormatError(f"{path}:1: expected header {','.join(MODEL_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ModelFormatError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                t, b, mu, sigma = (float(v) for v in row[:4])
                cnt = int(row[4])
            except ValueError as exc:
                raise ModelFormatError(f"{path}:{lineno}: {exc}") from None
            if (t, b) in rows:
                raise ModelFormatError(f"{path}:{lineno}: duplicate node (traffic={t}, bandwidth={b})")
            rows[(t, b)] = (mu, sigma, cnt)
    if not rows:
        raise ModelFormatError(f"{path}: no grid rows (header-only file)")
    t_axis = np.asarray(sorted({t for t, _ in rows}), dtype=float)
    b_axis = np.asarray(sorted({b for _, b in rows}), dtype=float)
    mu = np.zeros((len(t_axis), len(b_axis)))
    sigma = np.zeros_like(mu)
    count = np.zeros(mu.shape, dtype=int)
    for i, tv in enumerate(t_axis):
        for j, bv in enumerate(b_axis):
            key = (float(tv), float(bv))
            if key not in rows:
                raise ModelFormatError(
                    f"{path}: missing grid node (traffic={tv}, bandwidth={bv})")
            mu[i, j], sigma[i, j], count[i, j] = rows[key]
    return QoSModel(t_axis, b_axis, mu, sigma, count)


def save_samples(samples: Sequence[QoSSample], path: str | Path) -> None:
    """Write raw samples as CSV rows ``traffic,bandwidth,qos``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLE_CSV_HEADER)
        for s in samples:
            writer.writerow([repr(s.traffic), repr(s.bandwidth), repr(s.qos)])


def load_samples(path: str | Path) -> list[QoSSample]:
    path = Path(path)
    samples = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ModelFormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != SAMPLE_CSV_HEADER:
            raise ModelFormatError(f"{path}:1: expected header {','.join(SAMPLE_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ModelFormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                samples.append(QoSSample(*(float(v) for v in row)))
            except ValueError as exc:
                raise ModelFormatError(f"{path}:{lineno}: {exc}") from None
    return samples
