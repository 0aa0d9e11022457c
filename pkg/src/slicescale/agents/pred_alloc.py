"""Peak-provisioning heuristic.

Assumes the whole next DTI runs at the predicted peak traffic under a
fixed near-worst-case deterministic condition (magnitude 2, i.e. d = -2)
and grid-searches the smallest bandwidth fraction whose deterministic QoS
still clears the threshold.  Simple and safe, at the price of heavy
over-provisioning.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..env import DEFAULT_ACTION_GRID, fraction_to_raw
from ..network_model import QoSModel, deterministic_qos
from ..traffic import SUPPORT_LEVELS, TrafficDistribution, peak_of


def pred_alloc_decide(predicted, model: QoSModel, q_thresh: float,
                      action_grid: Sequence[float] = DEFAULT_ACTION_GRID,
                      worst_case_magnitude: float = 2.0) -> float:
    """Smallest grid fraction whose worst-case QoS at the predicted peak
    exceeds q_thresh; the grid maximum when none qualifies.

    ``predicted`` may be a TrafficDistribution, a TrafficTrace, or an array
    of traffic values.
    """
    peak = peak_of(predicted)
    d = -abs(worst_case_magnitude)
    for fraction in sorted(action_grid):
        if float(deterministic_qos(model, peak, fraction, d)) > q_thresh:
            return float(fraction)
    return float(max(action_grid))


class PredAllocPolicy:
    """Policy wrapper exposing the heuristic through the agent interface."""

    kind = "pred-alloc"

    def __init__(self, model: QoSModel, q_thresh: float = 2.0,
                 action_grid: Sequence[float] = DEFAULT_ACTION_GRID,
                 worst_case_magnitude: float = 2.0):
        self.model = model
        self.q_thresh = q_thresh
        self.action_grid = tuple(sorted(action_grid))
        self.worst_case_magnitude = worst_case_magnitude

    def act(self, obs_vec: np.ndarray, deterministic: bool = True) -> float:
        cdf = np.asarray(obs_vec, dtype=float)[:len(SUPPORT_LEVELS)]
        pmf = np.maximum(np.diff(cdf, prepend=0.0), 0.0)
        dist = TrafficDistribution(SUPPORT_LEVELS, pmf / pmf.sum())
        fraction = pred_alloc_decide(dist, self.model, self.q_thresh,
                                     self.action_grid, self.worst_case_magnitude)
        return fraction_to_raw(fraction, self.action_grid)
