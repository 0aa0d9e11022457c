"""Decision-makers: risk-constrained and baseline RL agents plus the
peak-provisioning heuristic.

All gradient agents share the float64 MLP machinery in :mod:`nets` (smooth
tanh/softplus parameterizations throughout, so every analytic gradient is
verifiable against central finite differences).
"""

from .checkpoint import PolicyCheckpoint, load_checkpoint, save_checkpoint
from .cpo import CPOAgent, CPOConfig, wc_terminal_cost
from .ppo import PPOAgent, PPOConfig
from .pred_alloc import PredAllocPolicy, pred_alloc_decide
from .wcsac import WCSACAgent, WCSACConfig, cvar_gaussian

__all__ = [
    "CPOAgent", "CPOConfig", "PPOAgent", "PPOConfig", "PolicyCheckpoint",
    "PredAllocPolicy", "WCSACAgent", "WCSACConfig", "cvar_gaussian",
    "load_checkpoint", "pred_alloc_decide", "save_checkpoint",
    "wc_terminal_cost",
]
