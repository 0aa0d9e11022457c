"""Constrained policy optimization (trust-region with a linearized cost
constraint), covering both the expectation-constrained variant and the
worst-case variant that appends an exponential terminal cost on
threshold-exceeding degradation:

    shaping_gamma * (exp([beta_final - beta_thresh]^+) - 1)

Each update maximizes the reward surrogate subject to a KL trust region
and the linearized constraint on expected discounted episode cost; when
the constraint cannot be restored inside the trust region the update falls
back to a pure cost-reduction step.  A backtracking line search enforces
the exact KL bound and the surrogate conditions on the accepted step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .onpolicy import (GaussianPolicy, Trajectory, ValueNet,
                       conjugate_gradient, discounted_return, gae_advantages)

EPS = 1e-10
# surrogate gradients live at O(0.01)-O(1) after advantage normalization;
# anything smaller than this is roundoff and must not drive a step
GRAD_EPS = 1e-8


class TrainingError(RuntimeError):
    """Raised on non-finite advantages or losses."""


def wc_terminal_cost(beta_final: float, beta_thresh: float,
                     shaping_gamma: float) -> float:
    """Exponential end-of-episode cost on degradation above the threshold.

    Zero at or below the threshold, shaping_gamma*(exp(excess) - 1) above it;
    continuous at the boundary and convex in beta_final.
    """
    if shaping_gamma < 0:
        raise ValueError("shaping_gamma must be >= 0")
    excess = beta_final - beta_thresh
    if excess <= 0.0:
        return 0.0
    return shaping_gamma * (math.exp(excess) - 1.0)


@dataclass(frozen=True)
class CPOConfig:
    trust_region_bound: float = 0.01
    cost_limit: float = 0.10
    shaping_gamma: float = 0.0  # 0 = plain expectation-constrained variant
    discount: float = 0.99
    gae_lambda: float = 0.97
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = -0.5
    lr_value: float = 1e-2
    value_iters: int = 60
    cg_iters: int = 30
    cg_damping: float = 0.1
    line_search_steps: int = 12
    line_search_coef: float = 0.8

    def __post_init__(self):
        if self.trust_region_bound <= 0:
            raise ValueError("trust_region_bound must be > 0")
        if self.shaping_gamma < 0:
            raise ValueError("shaping_gamma must be >= 0")


def solve_cpo_step(g: np.ndarray, b: np.ndarray, fvp, c: float, delta: float,
                   cg_iters: int = 30) -> tuple[np.ndarray, dict]:
    """Step direction for: max g.x  s.t. 0.5 x.H.x <= delta, b.x + c <= 0.

    Implements the standard dual case analysis; when the constraint cannot
    be satisfied inside the trust region the returned step purely reduces
    cost (recovery mode).
    """
    if np.linalg.norm(g) < GRAD_EPS and (c <= 0 or np.linalg.norm(b) < GRAD_EPS):
        return np.zeros_like(g), {"case": "noop", "recovery": False}

    hinv_g = conjugate_gradient(fvp, g, iters=cg_iters)
    q = float(g @ hinv_g)

    if np.linalg.norm(b) < GRAD_EPS:
        if c > 0:
            # constraint violated but no usable cost gradient: stay put
            return np.zeros_like(g), {"case": "stuck", "recovery": False}
        x = math.sqrt(2.0 * delta / max(q, EPS)) * hinv_g
        return x, {"case": "trpo", "recovery": False}

    hinv_b = conjugate_gradient(fvp, b, iters=cg_iters)
    r = float(g @ hinv_b)
    s = float(b @ hinv_b)
    A = q - r * r / s  # always >= 0 (Cauchy-Schwarz in the H^-1 metric)
    B = 2.0 * delta - c * c / s

    if c < 0 and B < 0:
        # trust region entirely inside the feasible half-space
        x = math.sqrt(2.0 * delta / max(q, EPS)) * hinv_g
        return x, {"case": "trpo", "recovery": False}
    if c >= 0 and B < 0:
        # infeasible: best effort cost reduction on the trust-region boundary
        x = -math.sqrt(2.0 * delta / s) * hinv_b
        return x, {"case": "recovery", "recovery": True}

    # both-active vs trust-region-only dual branches; nu(lam) = (lam*c + r)/s
    lam_mid = -r / c if c != 0 else math.inf

    def clip(lam, lo, hi):
        return min(max(lam, lo), hi)

    lam_a = math.sqrt(max(A, 0.0) / max(B, EPS))          # nu > 0 branch
    lam_b = math.sqrt(q / (2.0 * delta))                  # nu = 0 branch
    if c < 0:
        lam_a_star = clip(lam_a, 0.0, lam_mid) if lam_mid > 0 else 0.0
        lam_b_star = clip(lam_b, max(lam_mid, 0.0), math.inf)
    else:
        lam_a_star = clip(lam_a, max(lam_mid, 0.0), math.inf)
        lam_b_star = clip(lam_b, 0.0, lam_mid) if lam_mid > 0 else 0.0

    def f_active(lam):
        if lam <= 0:
            return math.inf
        return 0.5 * (A / lam + B * lam) - r * c / s

    def f_inactive(lam):
        if lam <= 0:
            return math.inf
        return 0.5 * (q / lam + 2.0 * delta * lam)

    if f_active(lam_a_star) <= f_inactive(lam_b_star):
        lam_star = lam_a_star
        nu = max(0.0, (lam_star * c + r) / s)
    else:
        lam_star = lam_b_star
        nu = 0.0
    if lam_star <= 0:
        x = -math.sqrt(2.0 * delta / s) * hinv_b
        return x, {"case": "recovery", "recovery": True}
    x = (hinv_g - nu * hinv_b) / lam_star
    return x, {"case": "dual", "recovery": False, "lam": lam_star, "nu": nu}


class CPOAgent:
    """Trust-region constrained policy optimization."""

    kind = "cpo"

    def __init__(self, obs_dim: int = 6, act_dim: int = 1,
                 config: CPOConfig = CPOConfig(), seed: int = 0):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.config = config
        ss = np.random.SeedSequence(seed)
        init_rng, self._rng = (np.random.default_rng(s) for s in ss.spawn(2))
        self.policy = GaussianPolicy(obs_dim, act_dim, tuple(config.hidden),
                                     init_rng, config.log_std_init)
        self.value_r = ValueNet(obs_dim, tuple(config.hidden), init_rng, config.lr_value)
        self.value_c = ValueNet(obs_dim, tuple(config.hidden), init_rng, config.lr_value)

    @property
    def kind_name(self) -> str:
        return "wc-cpo" if self.config.shaping_gamma > 0 else "cpo"

    def act(self, obs_vec: np.ndarray, deterministic: bool = False) -> float:
        return self.policy.act(obs_vec, deterministic, self._rng)

    def sample_action(self, obs_vec: np.ndarray) -> np.ndarray:
        u, _ = self.policy.sample(obs_vec, self._rng)
        return u

    def shaped_costs(self, traj: Trajectory) -> np.ndarray:
        costs = traj.costs.copy()
        if self.config.shaping_gamma > 0:
            costs[-1] += wc_terminal_cost(traj.beta_final, self.config.cost_limit,
                                          self.config.shaping_gamma)
        return costs

    def prepare_batch(self, trajectories: list[Trajectory]) -> dict:
        cfg = self.config
        if not trajectories:
            raise ValueError("no trajectories")
        obs = np.concatenate([t.obs for t in trajectories])
        actions = np.concatenate([t.actions for t in trajectories])
        v_r = self.value_r.predict(obs)
        v_c = self.value_c.predict(obs)
        adv_r, adv_c, ret_r, ret_c, jc = [], [], [], [], []
        i = 0
        for traj in trajectories:
            T = len(traj.rewards)
            costs = self.shaped_costs(traj)
            a_r = gae_advantages(traj.rewards, v_r[i:i + T], cfg.discount, cfg.gae_lambda)
            a_c = gae_advantages(costs, v_c[i:i + T], cfg.discount, cfg.gae_lambda)
            adv_r.append(a_r)
            adv_c.append(a_c)
            ret_r.append(a_r + v_r[i:i + T])
            ret_c.append(a_c + v_c[i:i + T])
            jc.append(discounted_return(costs, cfg.discount))
            i += T
        adv_r = np.concatenate(adv_r)
        adv_c = np.concatenate(adv_c)
        if not (np.all(np.isfinite(adv_r)) and np.all(np.isfinite(adv_c))):
            raise TrainingError("non-finite advantages")
        adv_r = (adv_r - adv_r.mean()) / (adv_r.std() + 1e-8)
        return {
            "obs": obs, "actions": actions, "adv_r": adv_r, "adv_c": adv_c,
            "ret_r": np.concatenate(ret_r), "ret_c": np.concatenate(ret_c),
            "jc": float(np.mean(jc)),
            "ep_len": float(np.mean([len(t.rewards) for t in trajectories])),
        }

    def surrogates(self, batch: dict, logp_old: np.ndarray) -> tuple[float, float]:
        """Reward and cost surrogates mean(ratio * adv) at the current params."""
        logp, _, _ = self.policy.evaluate(batch["obs"], batch["actions"])
        ratio = np.exp(logp - logp_old)
        return float(np.mean(ratio * batch["adv_r"])), float(np.mean(ratio * batch["adv_c"]))

    def update(self, trajectories: list[Trajectory]) -> dict:
        cfg = self.config
        batch = self.prepare_batch(trajectories)
        obs, actions = batch["obs"], batch["actions"]
        n = len(obs)

        logp_old, mu_old, _ = self.policy.evaluate(obs, actions)
        log_std_old = self.policy.log_std.copy()
        # gradients of the surrogates at theta_old (ratio == 1)
        g = self.policy.logp_param_grad(obs, actions, batch["adv_r"] / n)
        b = self.policy.logp_param_grad(obs, actions, batch["adv_c"] / n)
        # per-step scaling keeps the linearized constraint in surrogate units
        c = (batch["jc"] - cfg.cost_limit) / max(batch["ep_len"], 1.0)

        def fvp(v):
            return self.policy.fisher_vector_product(obs, v, cfg.cg_damping)

        x, step_info = solve_cpo_step(g, b, fvp, c, cfg.trust_region_bound, cfg.cg_iters)

        old_flat = self.policy.get_flat()
        surr_r_old, surr_c_old = np.mean(batch["adv_r"]), np.mean(batch["adv_c"])
        accepted = False
        kl = 0.0
        improve_r = improve_c = 0.0
        if np.linalg.norm(x) > 0:
            for js in range(cfg.line_search_steps):
                scale = cfg.line_search_coef ** js
                self.policy.set_flat(old_flat + scale * x)
                kl = self.policy.kl_mean(obs, mu_old, log_std_old)
                surr_r, surr_c = self.surrogates(batch, logp_old)
                improve_r = surr_r - surr_r_old
                improve_c = surr_c - surr_c_old
                reward_ok = step_info["recovery"] or improve_r > -1e-12
                cost_ok = improve_c <= max(-c, 0.0) + 1e-12
                if kl <= cfg.trust_region_bound and reward_ok and cost_ok:
                    accepted = True
                    break
            if not accepted:
                self.policy.set_flat(old_flat)
                kl = 0.0

        loss_vr = self.value_r.fit(obs, batch["ret_r"], cfg.value_iters)
        loss_vc = self.value_c.fit(obs, batch["ret_c"], cfg.value_iters)
        return {
            "kl": kl, "accepted": accepted, "case": step_info["case"],
            "jc": batch["jc"], "constraint_slack": c,
            "improve_r": improve_r, "improve_c": improve_c,
            "value_loss_r": loss_vr, "value_loss_c": loss_vc,
        }

    # -- persistence ---------------------------------------------------------

    def state_arrays(self) -> dict:
        arrays = {
            "policy": self.policy.get_flat(),
            "value_r": self.value_r.net.get_flat(),
            "value_c": self.value_c.net.get_flat(),
        }
        for name, opt in (("value_r", self.value_r.opt), ("value_c", self.value_c.opt)):
            st = opt.state()
            arrays[f"opt_{name}_m"] = st["m"]
            arrays[f"opt_{name}_v"] = st["v"]
            arrays[f"opt_{name}_t"] = np.array([st["t"]])
        return arrays

    def load_state_arrays(self, arrays: dict) -> None:
        self.policy.set_flat(arrays["policy"])
        self.value_r.net.set_flat(arrays["value_r"])
        self.value_c.net.set_flat(arrays["value_c"])
        for name, opt in (("value_r", self.value_r.opt), ("value_c", self.value_c.opt)):
            opt.load_state({"m": arrays[f"opt_{name}_m"], "v": arrays[f"opt_{name}_v"],
                            "t": int(arrays[f"opt_{name}_t"][0])})
