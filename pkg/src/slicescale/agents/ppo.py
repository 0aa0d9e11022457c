"""Clipped-surrogate policy optimization on a scalarized objective.

The per-step learning signal folds the cost into the reward with manually
tuned weights,

    scalarized = w_re * reward - w_qos * cost,

so the degradation/efficiency trade-off is fixed by the weights rather
than a constraint (the baseline the constrained agents are compared
against).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import Adam
from .onpolicy import GaussianPolicy, Trajectory, ValueNet, gae_advantages


class TrainingError(RuntimeError):
    """Raised on non-finite advantages or losses."""


@dataclass(frozen=True)
class PPOConfig:
    clip_ratio: float = 0.2
    w_re: float = 1.0
    w_qos: float = 100.0
    discount: float = 0.99
    gae_lambda: float = 0.97
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = -0.5
    lr_policy: float = 3e-4
    lr_value: float = 1e-2
    train_iters: int = 40
    value_iters: int = 60
    target_kl: float = 0.03  # early-stop guard on the update

    def __post_init__(self):
        if self.w_re < 0 or self.w_qos < 0:
            raise ValueError("scalarization weights must be >= 0")
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be > 0")


def scalarize(reward, cost, w_re: float, w_qos: float):
    """Combined learning signal: w_re * reward - w_qos * cost."""
    return w_re * np.asarray(reward) - w_qos * np.asarray(cost)


class PPOAgent:
    kind = "ppo"

    def __init__(self, obs_dim: int = 6, act_dim: int = 1,
                 config: PPOConfig = PPOConfig(), seed: int = 0):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.config = config
        ss = np.random.SeedSequence(seed)
        init_rng, self._rng = (np.random.default_rng(s) for s in ss.spawn(2))
        self.policy = GaussianPolicy(obs_dim, act_dim, tuple(config.hidden),
                                     init_rng, config.log_std_init)
        self.value = ValueNet(obs_dim, tuple(config.hidden), init_rng, config.lr_value)
        self.opt_policy = Adam(self.policy.n_params, config.lr_policy)

    def act(self, obs_vec: np.ndarray, deterministic: bool = False) -> float:
        return self.policy.act(obs_vec, deterministic, self._rng)

    def sample_action(self, obs_vec: np.ndarray) -> np.ndarray:
        u, _ = self.policy.sample(obs_vec, self._rng)
        return u

    def prepare_batch(self, trajectories: list[Trajectory]) -> dict:
        cfg = self.config
        if not trajectories:
            raise ValueError("no trajectories")
        obs = np.concatenate([t.obs for t in trajectories])
        actions = np.concatenate([t.actions for t in trajectories])
        values = self.value.predict(obs)
        adv, ret = [], []
        i = 0
        for traj in trajectories:
            T = len(traj.rewards)
            signal = scalarize(traj.rewards, traj.costs, cfg.w_re, cfg.w_qos)
            a = gae_advantages(signal, values[i:i + T], cfg.discount, cfg.gae_lambda)
            adv.append(a)
            ret.append(a + values[i:i + T])
            i += T
        adv = np.concatenate(adv)
        if not np.all(np.isfinite(adv)):
            raise TrainingError("non-finite advantages")
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        return {"obs": obs, "actions": actions, "adv": adv, "ret": np.concatenate(ret)}

    def clipped_loss_and_grad(self, obs: np.ndarray, actions: np.ndarray,
                              adv: np.ndarray, logp_old: np.ndarray):
        """Negative clipped surrogate and its policy gradient."""
        cfg = self.config
        logp, _, _ = self.policy.evaluate(obs, actions)
        ratio = np.exp(logp - logp_old)
        clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
        branch = np.minimum(ratio * adv, clipped * adv)
        loss = -float(np.mean(branch))
        # gradient flows only where the unclipped branch is the active minimum
        active = (ratio * adv <= clipped * adv)
        weights = np.where(active, -adv * ratio, 0.0) / len(obs)
        grad = self.policy.logp_param_grad(obs, actions, weights)
        return loss, grad

    def update(self, trajectories: list[Trajectory]) -> dict:
        cfg = self.config
        batch = self.prepare_batch(trajectories)
        obs, actions, adv = batch["obs"], batch["actions"], batch["adv"]
        logp_old, mu_old, _ = self.policy.evaluate(obs, actions)
        log_std_old = self.policy.log_std.copy()
        loss = 0.0
        iters_run = 0
        for _ in range(cfg.train_iters):
            loss, grad = self.clipped_loss_and_grad(obs, actions, adv, logp_old)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite policy loss {loss}")
            self.policy.set_flat(self.opt_policy.step(self.policy.get_flat(), grad))
            iters_run += 1
            if self.policy.kl_mean(obs, mu_old, log_std_old) > cfg.target_kl:
                break
        value_loss = self.value.fit(obs, batch["ret"], cfg.value_iters)
        return {"policy_loss": loss, "value_loss": value_loss,
                "policy_iters": iters_run,
                "kl": self.policy.kl_mean(obs, mu_old, log_std_old)}

    # -- persistence ---------------------------------------------------------

    def state_arrays(self) -> dict:
        arrays = {"policy": self.policy.get_flat(), "value": self.value.net.get_flat()}
        for name, opt in (("policy", self.opt_policy), ("value", self.value.opt)):
            st = opt.state()
            arrays[f"opt_{name}_m"] = st["m"]
            arrays[f"opt_{name}_v"] = st["v"]
            arrays[f"opt_{name}_t"] = np.array([st["t"]])
        return arrays

    def load_state_arrays(self, arrays: dict) -> None:
        self.policy.set_flat(arrays["policy"])
        self.value.net.set_flat(arrays["value"])
        for name, opt in (("policy", self.opt_policy), ("value", self.value.opt)):
            opt.load_state({"m": arrays[f"opt_{name}_m"], "v": arrays[f"opt_{name}_v"],
                            "t": int(arrays[f"opt_{name}_t"][0])})
