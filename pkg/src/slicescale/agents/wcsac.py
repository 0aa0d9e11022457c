"""Worst-case soft actor-critic (risk-constrained SAC).

Actor-critic with a squashed-Gaussian policy, twin reward critics, and a
distributional cost critic that predicts both the mean and the variance of
the discounted cost-to-go.  Safety is enforced on the Gaussian CVaR of the
cost,

    Gamma(s, a) = Qc(s, a) + alpha^-1 * phi(PPF(1 - alpha)) * sqrt(Vc(s, a)),

through a learned Lagrange multiplier k: the actor maximizes
Qr - k * Gamma with entropy regularization, k rises whenever the batch
CVaR exceeds the cost limit and falls otherwise (clamped at 0), and the
entropy weight tracks a target entropy.

Cost-critic variance is trained with the second-moment Bellman recursion
E[C^2] = c^2 + 2*gamma*c*Qc' + gamma^2*(Vc' + Qc'^2), with the variance head
kept non-negative through a softplus output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .nets import MLP, Adam, softplus, softplus_grad

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
VAR_EPS = 1e-12  # keeps sqrt(Vc) differentiable at 0


class TrainingDivergenceError(RuntimeError):
    """Raised when an update produces non-finite losses."""


def cvar_gaussian(mean: float, variance: float, risk_alpha: float) -> float:
    """Conditional value-at-risk of N(mean, variance) at level risk_alpha.

    Expected value of the worst risk_alpha tail:
    mean + risk_alpha^-1 * pdf(ppf(1 - risk_alpha)) * sqrt(variance).
    Equals the mean when variance is 0 or risk_alpha is 1.
    """
    if not 0.0 < risk_alpha <= 1.0:
        raise ValueError(f"risk_alpha must be in (0, 1], got {risk_alpha}")
    if np.any(np.asarray(variance) < 0.0):
        raise ValueError("variance must be >= 0")
    return mean + cvar_coefficient(risk_alpha) * np.sqrt(variance)


def cvar_coefficient(risk_alpha: float) -> float:
    """Multiplier on the standard deviation in the Gaussian CVaR formula."""
    if risk_alpha == 1.0:
        return 0.0
    return float(norm.pdf(norm.ppf(1.0 - risk_alpha)) / risk_alpha)


@dataclass(frozen=True)
class WCSACConfig:
    risk_alpha: float = 0.1
    cost_limit: float = 0.10
    discount: float = 0.99
    hidden: tuple[int, ...] = (64, 64)
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_entropy: float = 3e-4
    lr_safety: float = 2e-2
    entropy_multiplier_init: float = 0.2
    safety_multiplier_init: float = 0.0
    target_entropy: float = -1.0
    batch_size: int = 256
    replay_capacity: int = 60_000
    start_steps: int = 500
    update_after: int = 500
    polyak: float = 0.995

    def __post_init__(self):
        if not 0.0 < self.risk_alpha <= 1.0:
            raise ValueError("risk_alpha must be in (0, 1]")
        if self.cost_limit <= 0:
            raise ValueError("cost_limit must be > 0")
        if self.entropy_multiplier_init <= 0 or self.safety_multiplier_init < 0:
            raise ValueError("multipliers must start positive (entropy) / >= 0 (safety)")


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.cost = np.zeros(capacity)
        self.obs2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._ptr = 0

    def push(self, obs, act, rew, cost, obs2, done):
        i = self._ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.cost[i] = cost
        self.obs2[i] = obs2
        self.done[i] = float(done)
        self._ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx], "act": self.act[idx], "rew": self.rew[idx],
            "cost": self.cost[idx], "obs2": self.obs2[idx], "done": self.done[idx],
        }


class WCSACAgent:
    """WCSAC with numpy networks; single-threaded per instance."""

    kind = "wcsac"

    def __init__(self, obs_dim: int = 6, act_dim: int = 1,
                 config: WCSACConfig = WCSACConfig(), seed: int = 0):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.config = config
        ss = np.random.SeedSequence(seed)
        init_rng, self._rng = (np.random.default_rng(s) for s in ss.spawn(2))
        hid = tuple(config.hidden)
        self.actor = MLP((obs_dim, *hid, 2 * act_dim), init_rng, final_scale=0.01)
        self.q1 = MLP((obs_dim + act_dim, *hid, 1), init_rng)
        self.q2 = MLP((obs_dim + act_dim, *hid, 1), init_rng)
        # cost critic starts near (mean 0, variance ~0): costs are O(0.01)
        # per step, and a fresh variance head must not inflate the CVaR
        self.qc = MLP((obs_dim + act_dim, *hid, 2), init_rng, final_scale=0.01)
        self.qc.params[-1][1] = -7.0  # softplus(-7) ~ 1e-3 initial variance
        self.q1_targ = MLP((obs_dim + act_dim, *hid, 1), init_rng)
        self.q2_targ = MLP((obs_dim + act_dim, *hid, 1), init_rng)
        self.qc_targ = MLP((obs_dim + act_dim, *hid, 2), init_rng)
        for net, targ in ((self.q1, self.q1_targ), (self.q2, self.q2_targ),
                          (self.qc, self.qc_targ)):
            targ.set_flat(net.get_flat())
        self.log_beta = math.log(config.entropy_multiplier_init)
        self.k = config.safety_multiplier_init
        self.opt_actor = Adam(self.actor.n_params, config.lr_actor)
        self.opt_q1 = Adam(self.q1.n_params, config.lr_critic)
        self.opt_q2 = Adam(self.q2.n_params, config.lr_critic)
        self.opt_qc = Adam(self.qc.n_params, config.lr_critic)
        self.opt_log_beta = Adam(1, config.lr_entropy)
        self.replay = ReplayBuffer(config.replay_capacity, obs_dim, act_dim)
        self.total_steps = 0
        self.cvar_coef = cvar_coefficient(config.risk_alpha)

    # -- policy ------------------------------------------------------------

    def _policy_heads(self, obs: np.ndarray):
        out, cache = self.actor.forward(obs)
        mu = out[:, :self.act_dim]
        raw = out[:, self.act_dim:]
        tanh_raw = np.tanh(raw)
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (tanh_raw + 1.0)
        return mu, log_std, tanh_raw, cache

    def _sample(self, obs: np.ndarray, eps: np.ndarray):
        """Reparameterized action, log-prob, and everything backward needs."""
        mu, log_std, tanh_raw, cache = self._policy_heads(obs)
        std = np.exp(log_std)
        u = mu + std * eps
        a = np.tanh(u)
        logp = np.sum(-0.5 * np.square(eps) - log_std - 0.5 * math.log(2 * math.pi)
                      - 2.0 * (math.log(2.0) - u - softplus(-2.0 * u)), axis=1)
        return {"mu": mu, "log_std": log_std, "tanh_raw": tanh_raw, "std": std,
                "u": u, "a": a, "logp": logp, "cache": cache, "eps": eps}

    def act(self, obs_vec: np.ndarray, deterministic: bool = False) -> float:
        obs = np.atleast_2d(obs_vec)
        if deterministic:
            mu, _, _, _ = self._policy_heads(obs)
            return float(np.tanh(mu[0, 0]))
        eps = self._rng.standard_normal((1, self.act_dim))
        return float(self._sample(obs, eps)["a"][0, 0])

    # -- critic evaluation ---------------------------------------------------

    def _critics(self, obs: np.ndarray, act: np.ndarray, target: bool = False):
        sa = np.concatenate([obs, act], axis=1)
        q1n = self.q1_targ if target else self.q1
        q2n = self.q2_targ if target else self.q2
        qcn = self.qc_targ if target else self.qc
        q1v, c1 = q1n.forward(sa)
        q2v, c2 = q2n.forward(sa)
        qco, cc = qcn.forward(sa)
        return {
            "q1": q1v[:, 0], "q2": q2v[:, 0],
            "qc_mean": qco[:, 0], "vc_raw": qco[:, 1], "vc": softplus(qco[:, 1]),
            "caches": (c1, c2, cc), "sa": sa,
        }

    def gamma_cvar(self, qc_mean: np.ndarray, vc: np.ndarray) -> np.ndarray:
        return qc_mean + self.cvar_coef * np.sqrt(vc + VAR_EPS)

    # -- losses and gradients (exposed for finite-difference verification) ---

    def compute_targets(self, batch: dict, eps_next: np.ndarray) -> dict:
        """Bellman targets for the reward and cost critics (no gradients)."""
        cfg = self.config
        pol = self._sample(batch["obs2"], eps_next)
        crit = self._critics(batch["obs2"], pol["a"], target=True)
        not_done = 1.0 - batch["done"]
        beta_ent = math.exp(self.log_beta)
        qmin = np.minimum(crit["q1"], crit["q2"])
        y_r = batch["rew"] + cfg.discount * not_done * (qmin - beta_ent * pol["logp"])
        y_c = batch["cost"] + cfg.discount * not_done * crit["qc_mean"]
        qc_sa = self._critics(batch["obs"], batch["act"])["qc_mean"]
        second = (np.square(batch["cost"])
                  + not_done * (2.0 * cfg.discount * batch["cost"] * crit["qc_mean"]
                                + cfg.discount ** 2 * (crit["vc"] + np.square(crit["qc_mean"]))))
        y_v = np.maximum(second - np.square(qc_sa), 0.0)
        return {"y_r": y_r, "y_c": y_c, "y_v": y_v}

    def reward_critic_loss(self, obs, act, y_r, with_grads: bool = True):
        crit = self._critics(obs, act)
        n = len(y_r)
        e1 = crit["q1"] - y_r
        e2 = crit["q2"] - y_r
        loss = float(np.mean(np.square(e1)) + np.mean(np.square(e2)))
        if not with_grads:
            return loss, None, None
        g1, _ = self.q1.backward(crit["caches"][0], (2.0 * e1 / n)[:, None])
        g2, _ = self.q2.backward(crit["caches"][1], (2.0 * e2 / n)[:, None])
        return loss, g1, g2

    def cost_critic_loss(self, obs, act, y_c, y_v, with_grads: bool = True):
        crit = self._critics(obs, act)
        n = len(y_c)
        ec = crit["qc_mean"] - y_c
        ev = crit["vc"] - y_v
        loss = float(np.mean(np.square(ec)) + np.mean(np.square(ev)))
        if not with_grads:
            return loss, None
        dout = np.stack([2.0 * ec / n,
                         2.0 * ev / n * softplus_grad(crit["vc_raw"])], axis=1)
        gc, _ = self.qc.backward(crit["caches"][2], dout)
        return loss, gc

    def actor_loss(self, obs, eps, with_grads: bool = True):
        """mean(beta*logp + k*Gamma - min(Q1, Q2)) and its actor gradient."""
        cfg = self.config
        beta_ent = math.exp(self.log_beta)
        pol = self._sample(obs, eps)
        crit = self._critics(obs, pol["a"])
        qmin = np.minimum(crit["q1"], crit["q2"])
        gamma = self.gamma_cvar(crit["qc_mean"], crit["vc"])
        loss = float(np.mean(beta_ent * pol["logp"] + self.k * gamma - qmin))
        if not with_grads:
            return loss, None, pol, gamma
        n = len(obs)
        use_q1 = (crit["q1"] <= crit["q2"]).astype(float)
        d1 = (-use_q1 / n)[:, None]
        d2 = (-(1.0 - use_q1) / n)[:, None]
        _, dsa1 = self.q1.backward(crit["caches"][0], d1)
        _, dsa2 = self.q2.backward(crit["caches"][1], d2)
        dgam = self.k / n
        dqc_out = np.stack([
            np.full(n, dgam),
            dgam * self.cvar_coef * 0.5 / np.sqrt(crit["vc"] + VAR_EPS)
            * softplus_grad(crit["vc_raw"]),
        ], axis=1)
        _, dsac = self.qc.backward(crit["caches"][2], dqc_out)
        da = (dsa1 + dsa2 + dsac)[:, self.obs_dim:]

        coef_logp = beta_ent / n
        two_tanh_u = 2.0 * np.tanh(pol["u"])
        du = coef_logp * two_tanh_u + da * (1.0 - np.square(pol["a"]))
        dmu = du
        dlog_std = -coef_logp + du * pol["std"] * pol["eps"]
        draw = dlog_std * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - np.square(pol["tanh_raw"]))
        dout = np.concatenate([dmu, draw], axis=1)
        grad, _ = self.actor.backward(pol["cache"], dout)
        return loss, grad, pol, gamma

    # -- update --------------------------------------------------------------

    def observe(self, obs, act, rew, cost, obs2, done):
        self.replay.push(obs, act, rew, cost, obs2, done)
        self.total_steps += 1

    def ready(self) -> bool:
        return (self.replay.size >= self.config.batch_size
                and self.total_steps >= self.config.update_after)

    def update(self) -> dict:
        batch = self.replay.sample(self.config.batch_size, self._rng)
        n = len(batch["rew"])
        eps_next = self._rng.standard_normal((n, self.act_dim))
        eps_pi = self._rng.standard_normal((n, self.act_dim))
        return self.update_from_batch(batch, eps_next, eps_pi)

    def update_from_batch(self, batch: dict, eps_next: np.ndarray,
                          eps_pi: np.ndarray) -> dict:
        """One full WCSAC update on a fixed batch with fixed sampling noise."""
        cfg = self.config
        if len(batch["rew"]) == 0:
            raise ValueError("empty batch")
        targets = self.compute_targets(batch, eps_next)
        q_loss, g1, g2 = self.reward_critic_loss(batch["obs"], batch["act"], targets["y_r"])
        self.q1.set_flat(self.opt_q1.step(self.q1.get_flat(), g1))
        self.q2.set_flat(self.opt_q2.step(self.q2.get_flat(), g2))
        qc_loss, gc = self.cost_critic_loss(batch["obs"], batch["act"],
                                            targets["y_c"], targets["y_v"])
        self.qc.set_flat(self.opt_qc.step(self.qc.get_flat(), gc))

        pi_loss, g_actor, pol, gamma = self.actor_loss(batch["obs"], eps_pi)
        if not (np.isfinite(q_loss) and np.isfinite(qc_loss) and np.isfinite(pi_loss)):
            raise TrainingDivergenceError(
                f"non-finite losses: q={q_loss}, qc={qc_loss}, pi={pi_loss}")
        self.actor.set_flat(self.opt_actor.step(self.actor.get_flat(), g_actor))

        # dual variables: entropy weight tracks the target entropy; the safety
        # multiplier rises iff the batch CVaR exceeds the cost limit
        g_log_beta = -float(np.mean(pol["logp"]) + cfg.target_entropy)
        self.log_beta = float(self.opt_log_beta.step(
            np.array([self.log_beta]), np.array([g_log_beta]))[0])
        gamma_mean = float(np.mean(gamma))
        self.k = max(0.0, self.k + cfg.lr_safety * (gamma_mean - cfg.cost_limit))

        for net, targ in ((self.q1, self.q1_targ), (self.q2, self.q2_targ),
                          (self.qc, self.qc_targ)):
            targ.set_flat(cfg.polyak * targ.get_flat() + (1.0 - cfg.polyak) * net.get_flat())

        return {
            "q_loss": q_loss, "qc_loss": qc_loss, "pi_loss": pi_loss,
            "gamma_mean": gamma_mean, "k": self.k, "beta_ent": math.exp(self.log_beta),
            "entropy": -float(np.mean(pol["logp"])),
        }

    # -- persistence -----------------------------------------------------------

    def state_arrays(self) -> dict:
        arrays = {
            "actor": self.actor.get_flat(), "q1": self.q1.get_flat(),
            "q2": self.q2.get_flat(), "qc": self.qc.get_flat(),
            "q1_targ": self.q1_targ.get_flat(), "q2_targ": self.q2_targ.get_flat(),
            "qc_targ": self.qc_targ.get_flat(),
            "scalars": np.array([self.log_beta, self.k, float(self.total_steps)]),
        }
        for name, opt in (("actor", self.opt_actor), ("q1", self.opt_q1),
                          ("q2", self.opt_q2), ("qc", self.opt_qc),
                          ("log_beta", self.opt_log_beta)):
            st = opt.state()
            arrays[f"opt_{name}_m"] = st["m"]
            arrays[f"opt_{name}_v"] = st["v"]
            arrays[f"opt_{name}_t"] = np.array([st["t"]])
        return arrays

    def load_state_arrays(self, arrays: dict) -> None:
        self.actor.set_flat(arrays["actor"])
        self.q1.set_flat(arrays["q1"])
        self.q2.set_flat(arrays["q2"])
        self.qc.set_flat(arrays["qc"])
        self.q1_targ.set_flat(arrays["q1_targ"])
        self.q2_targ.set_flat(arrays["q2_targ"])
        self.qc_targ.set_flat(arrays["qc_targ"])
        self.log_beta, self.k = float(arrays["scalars"][0]), float(arrays["scalars"][1])
        self.total_steps = int(arrays["scalars"][2])
        for name, opt in (("actor", self.opt_actor), ("q1", self.opt_q1),
                          ("q2", self.opt_q2), ("qc", self.opt_qc),
                          ("log_beta", self.opt_log_beta)):
            opt.load_state({"m": arrays[f"opt_{name}_m"], "v": arrays[f"opt_{name}_v"],
                            "t": int(arrays[f"opt_{name}_t"][0])})
