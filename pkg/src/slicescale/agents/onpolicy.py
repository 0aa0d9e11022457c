"""Shared machinery for the on-policy agents (trust-region and clipped
surrogate): a diagonal-Gaussian policy over the pre-squash action, episode
trajectories, and generalized advantage estimation.

The environment consumes tanh(u); ratios and KL divergences are computed
on the underlying Gaussian, where they have closed forms (the tanh
Jacobian cancels for a fixed sampled action).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import MLP

LOG2PI = math.log(2.0 * math.pi)


class GaussianPolicy:
    """State-dependent mean network with a global log-std vector."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: tuple[int, ...],
                 rng: np.random.Generator, log_std_init: float = -0.5):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.net = MLP((obs_dim, *hidden, act_dim), rng, final_scale=0.01)
        self.log_std = np.full(act_dim, float(log_std_init))
        self.n_params = self.net.n_params + act_dim

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.net.get_flat(), self.log_std])

    def set_flat(self, flat: np.ndarray) -> None:
        self.net.set_flat(flat[:self.net.n_params])
        self.log_std[...] = flat[self.net.n_params:]

    def mean(self, obs: np.ndarray):
        return self.net.forward(np.atleast_2d(obs))

    def sample(self, obs_vec: np.ndarray, rng: np.random.Generator):
        """One pre-squash action and its log-prob for a single observation."""
        mu, _ = self.mean(obs_vec)
        std = np.exp(self.log_std)
        u = mu[0] + std * rng.standard_normal(self.act_dim)
        return u, float(self.logp_of(mu[0:1], u[None, :])[0])

    def act(self, obs_vec: np.ndarray, deterministic: bool,
            rng: np.random.Generator | None = None) -> float:
        if deterministic:
            mu, _ = self.mean(obs_vec)
            return float(np.tanh(mu[0, 0]))
        u, _ = self.sample(obs_vec, rng)
        return float(np.tanh(u[0]))

    def logp_of(self, mu: np.ndarray, u: np.ndarray) -> np.ndarray:
        z = (u - mu) / np.exp(self.log_std)
        return np.sum(-0.5 * np.square(z) - self.log_std - 0.5 * LOG2PI, axis=1)

    def evaluate(self, obs: np.ndarray, u: np.ndarray):
        """Log-probs of stored actions plus the cache for backprop."""
        mu, cache = self.net.forward(obs)
        return self.logp_of(mu, u), mu, cache

    def logp_param_grad(self, obs: np.ndarray, u: np.ndarray,
                        weights: np.ndarray) -> np.ndarray:
        """Gradient of sum_i weights_i * logp_i over the flat parameters."""
        mu, cache = self.net.forward(obs)
        std = np.exp(self.log_std)
        z = (u - mu) / std
        dmu = weights[:, None] * z / std
        g_net, _ = self.net.backward(cache, dmu)
        g_log_std = np.sum(weights[:, None] * (np.square(z) - 1.0), axis=0)
        return np.concatenate([g_net, g_log_std])

    def kl_mean(self, obs: np.ndarray, old_mu: np.ndarray,
                old_log_std: np.ndarray) -> float:
        """Mean KL(old || current) over the batch states (closed form)."""
        mu, _ = self.net.forward(obs)
        var_old = np.exp(2.0 * old_log_std)
        var_new = np.exp(2.0 * self.log_std)
        kl = (self.log_std - old_log_std
              + (var_old + np.square(old_mu - mu)) / (2.0 * var_new) - 0.5)
        return float(np.mean(np.sum(kl, axis=1)))

    def fisher_vector_product(self, obs: np.ndarray, v: np.ndarray,
                              damping: float = 0.0) -> np.ndarray:
        """(Hessian of mean KL at the current parameters) @ v.

        Gauss-Newton form: J^T M J v with the Gaussian Fisher M, which for a
        diagonal Gaussian is 1/sigma^2 per mean dim and 2 per log-std dim.
        Exact at the expansion point, verified against finite differences of
        the KL gradient in the tests.
        """
        n = len(obs)
        _, cache = self.net.forward(obs)
        dmu = self.net.jvp(cache, v[:self.net.n_params])  # J_mu v
        weighted = dmu / np.exp(2.0 * self.log_std) / n
        g_net, _ = self.net.backward(cache, weighted)     # J_mu^T (...)
        g_log_std = 2.0 * v[self.net.n_params:]
        return np.concatenate([g_net, g_log_std]) + damping * v


@dataclass
class Trajectory:
    """One complete episode as seen by an on-policy learner."""

    obs: np.ndarray       # (T, obs_dim)
    actions: np.ndarray   # (T, act_dim) pre-squash Gaussian samples
    rewards: np.ndarray   # (T,)
    costs: np.ndarray     # (T,)
    beta_final: float


def discounted_return(values: np.ndarray, discount: float) -> float:
    return float(np.sum(values * discount ** np.arange(len(values))))


def gae_advantages(rewards: np.ndarray, values: np.ndarray, discount: float,
                   lam: float) -> np.ndarray:
    """Generalized advantage estimation for a terminal episode (V(s_T) = 0)."""
    T = len(rewards)
    adv = np.zeros(T)
    next_value = 0.0
    running = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + discount * next_value - values[t]
        running = delta + discount * lam * running
        adv[t] = running
        next_value = values[t]
    return adv


def conjugate_gradient(mat_vec, rhs: np.ndarray, iters: int = 20,
                       tol: float = 1e-10) -> np.ndarray:
    """Solve mat_vec(x) = rhs for symmetric positive-definite mat_vec."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = rhs.copy()
    rr = r @ r
    for _ in range(iters):
        if rr < tol:
            break
        hp = mat_vec(p)
        alpha = rr / (p @ hp)
        x += alpha * p
        r -= alpha * hp
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


class ValueNet:
    """State-value regressor fitted by Adam on squared error."""

    def __init__(self, obs_dim: int, hidden: tuple[int, ...],
                 rng: np.random.Generator, lr: float = 1e-3):
        from .nets import Adam
        self.net = MLP((obs_dim, *hidden, 1), rng)
        self.opt = Adam(self.net.n_params, lr)

    def predict(self, obs: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(obs)
        return out[:, 0]

    def loss_and_grad(self, obs: np.ndarray, targets: np.ndarray):
        out, cache = self.net.forward(obs)
        err = out[:, 0] - targets
        loss = float(np.mean(np.square(err)))
        grad, _ = self.net.backward(cache, (2.0 * err / len(err))[:, None])
        return loss, grad

    def fit(self, obs: np.ndarray, targets: np.ndarray, iters: int) -> float:
        loss = 0.0
        for _ in range(iters):
            loss, grad = self.loss_and_grad(obs, targets)
            self.net.set_flat(self.opt.step(self.net.get_flat(), grad))
        return loss
