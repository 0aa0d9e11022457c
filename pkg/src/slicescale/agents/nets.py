"""Minimal float64 neural-net machinery: tanh MLPs with explicit
forward/backward/JVP passes and an Adam optimizer on flat parameter
vectors.

Networks here are tiny (two hidden layers of 64 units on 6-dim
observations), so plain numpy in double precision is faster than any
framework would be and keeps training bit-reproducible under a seed.
Every pass is hand-derived and exercised against central finite
differences in the test suite.
"""

from __future__ import annotations

import numpy as np


def xavier_init(sizes: tuple[int, ...], rng: np.random.Generator,
                final_scale: float = 1.0) -> list[np.ndarray]:
    """Per-layer [W, b] arrays, N(0, 1/fan_in) weights, zero biases."""
    params = []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = 1.0 / np.sqrt(n_in)
        if k == len(sizes) - 2:
            scale *= final_scale
        params.append(rng.normal(0.0, scale, size=(n_in, n_out)))
        params.append(np.zeros(n_out))
    return params


class MLP:
    """Fully connected net, tanh hidden activations, linear output."""

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator,
                 final_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.params = xavier_init(self.sizes, rng, final_scale)
        self.n_params = sum(p.size for p in self.params)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        offset = 0
        for p in self.params:
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Batched forward pass; cache holds the activations for backward/jvp."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hs = [x]
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = hs[-1] @ w + b
            hs.append(np.tanh(z) if layer < n_layers - 1 else z)
        return hs[-1], {"hs": hs}

    def backward(self, cache: dict, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of sum(dout * output) w.r.t. (flat params, input)."""
        hs = cache["hs"]
        n_layers = len(self.params) // 2
        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        dz = np.asarray(dout, dtype=float)
        for layer in range(n_layers - 1, -1, -1):
            w = self.params[2 * layer]
            grads[2 * layer] = hs[layer].T @ dz
            grads[2 * layer + 1] = dz.sum(axis=0)
            dh = dz @ w.T
            if layer > 0:
                dz = dh * (1.0 - np.square(hs[layer]))
            else:
                dz = dh
        return np.concatenate([g.ravel() for g in grads]), dz

    def jvp(self, cache: dict, v_flat: np.ndarray) -> np.ndarray:
        """Directional derivative of the output along parameter tangent v."""
        hs = cache["hs"]
        n_layers = len(self.params) // 2
        vs = []
        offset = 0
        for p in self.params:
            vs.append(v_flat[offset:offset + p.size].reshape(p.shape))
            offset += p.size
        t = np.zeros_like(hs[0])
        for layer in range(n_layers):
            w = self.params[2 * layer]
            dw, db = vs[2 * layer], vs[2 * layer + 1]
            s = hs[layer] @ dw + t @ w + db
            if layer < n_layers - 1:
                t = (1.0 - np.square(hs[layer + 1])) * s
            else:
                t = s
        return t


class Adam:
    """Adam on a flat parameter vector; state is part of checkpoints."""

    def __init__(self, n_params: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * np.square(grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> dict:
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t}

    def load_state(self, state: dict) -> None:
        self.m = np.asarray(state["m"], dtype=float).copy()
        self.v = np.asarray(state["v"], dtype=float).copy()
        self.t = int(state["t"])


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_grad(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function (test oracle)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Relative error between gradient vectors for finite-difference checks."""
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(num / den)
