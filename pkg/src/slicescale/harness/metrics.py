"""Aggregated evaluation metrics and sweep containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MetricsRecord:
    """Bandwidth and QoS-degradation statistics over an evaluation run.

    Bandwidth is averaged over all steps of an episode; the min/max are
    taken across episodes for both quantities.  All values in percent.
    """

    label: str
    mean_bandwidth_pct: float
    min_bandwidth_pct: float
    max_bandwidth_pct: float
    mean_qos_degradation_pct: float
    min_qos_degradation_pct: float
    max_qos_degradation_pct: float
    episodes: int
    config_hash: str = ""

    def __post_init__(self):
        for lo, mid, hi in (
            (self.min_bandwidth_pct, self.mean_bandwidth_pct, self.max_bandwidth_pct),
            (self.min_qos_degradation_pct, self.mean_qos_degradation_pct,
             self.max_qos_degradation_pct),
        ):
            if not (0.0 <= lo <= mid + 1e-9 and mid <= hi + 1e-9 and hi <= 100.0):
                raise ValueError(f"metrics out of order/range: {lo}, {mid}, {hi}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")

    @classmethod
    def from_episodes(cls, label: str, episode_bandwidths, episode_betas,
                      config_hash: str = "") -> "MetricsRecord":
        bw = 100.0 * np.asarray(episode_bandwidths, dtype=float)
        beta = 100.0 * np.asarray(episode_betas, dtype=float)
        return cls(
            label=label,
            mean_bandwidth_pct=float(bw.mean()),
            min_bandwidth_pct=float(bw.min()),
            max_bandwidth_pct=float(bw.max()),
            mean_qos_degradation_pct=float(beta.mean()),
            min_qos_degradation_pct=float(beta.min()),
            max_qos_degradation_pct=float(beta.max()),
            episodes=len(beta),
            config_hash=config_hash,
        )

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "mean_bandwidth_pct": self.mean_bandwidth_pct,
            "min_bandwidth_pct": self.min_bandwidth_pct,
            "max_bandwidth_pct": self.max_bandwidth_pct,
            "mean_qos_degradation_pct": self.mean_qos_degradation_pct,
            "min_qos_degradation_pct": self.min_qos_degradation_pct,
            "max_qos_degradation_pct": self.max_qos_degradation_pct,
            "episodes": self.episodes,
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsRecord":
        return cls(**data)


@dataclass
class SweepResult:
    """Per-value metrics for one swept parameter plus the reference run
    (stochastic conditions for the condition sweep, the fully random
    predictor for the noise sweep)."""

    parameter: str
    values: list = field(default_factory=list)
    records: list = field(default_factory=list)
    reference: MetricsRecord | None = None

    def __post_init__(self):
        if len(self.values) != len(self.records):
            raise ValueError("one record per swept value required")

    def as_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "values": list(self.values),
            "records": [r.as_dict() for r in self.records],
            "reference": self.reference.as_dict() if self.reference else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepResult":
        return cls(
            parameter=data["parameter"],
            values=list(data["values"]),
            records=[MetricsRecord.from_dict(r) for r in data["records"]],
            reference=MetricsRecord.from_dict(data["reference"])
            if data.get("reference") else None,
        )
