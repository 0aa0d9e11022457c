"""Trust-region constrained update tests: the exponential terminal cost,
the dual step solver against a numeric QP oracle, reduction to the plain
trust-region step when the constraint is off, the exact-KL line search
bound, and update determinism.
"""

import math

import numpy as np
import pytest
from scipy import optimize

from slicescale.agents.cpo import (CPOAgent, CPOConfig, TrainingError,
                                   solve_cpo_step, wc_terminal_cost)
from slicescale.agents.onpolicy import Trajectory, conjugate_gradient

CFG = CPOConfig(hidden=(8, 8))


# ---------------------------------------------------------------------------
# wc_terminal_cost
# ---------------------------------------------------------------------------

def test_terminal_cost_zero_at_and_below_threshold():
    assert wc_terminal_cost(0.10, 0.10, 10.0) == 0.0
    assert wc_terminal_cost(0.03, 0.10, 10.0) == 0.0


def test_terminal_cost_arithmetic():
    # 10 * (e^0.1 - 1), frozen
    assert wc_terminal_cost(0.20, 0.10, 10.0) == pytest.approx(
        1.0517091807564771, abs=1e-12)


def test_terminal_cost_continuous_and_convex():
    eps = 1e-9
    assert wc_terminal_cost(0.10 + eps, 0.10, 10.0) <= 2e-8
    xs = np.linspace(0.0, 0.5, 201)
    ys = np.array([wc_terminal_cost(x, 0.10, 10.0) for x in xs])
    second = ys[2:] - 2 * ys[1:-1] + ys[:-2]
    assert np.all(second >= -1e-12)


def test_terminal_cost_rejects_negative_gamma():
    with pytest.raises(ValueError):
        wc_terminal_cost(0.2, 0.1, -1.0)


# ---------------------------------------------------------------------------
# dual step solver vs numeric QP oracle
# ---------------------------------------------------------------------------

def numeric_qp(h_mat, g, b, c, delta):
    """Brute-force solve: max g.x st 0.5 x.H.x <= delta, b.x + c <= 0."""
    cons = [
        {"type": "ineq", "fun": lambda x: delta - 0.5 * x @ h_mat @ x,
         "jac": lambda x: -h_mat @ x},
        {"type": "ineq", "fun": lambda x: -(b @ x + c), "jac": lambda x: -b},
    ]
    best = None
    for trial in range(4):
        x0 = 0.01 * np.random.default_rng(trial).standard_normal(len(g))
        res = optimize.minimize(lambda x: -g @ x, x0, jac=lambda x: -g,
                                constraints=cons, method="SLSQP",
                                options={"maxiter": 400, "ftol": 1e-14})
        if res.success and (best is None or -res.fun > best):
            best = -res.fun
    return best


def test_dual_solver_matches_numeric_oracle():
    rng = np.random.default_rng(0)
    delta = 0.01
    for trial in range(12):
        dim = 6
        m = rng.standard_normal((dim, dim))
        h_mat = m @ m.T + 0.5 * np.eye(dim)
        g = rng.standard_normal(dim)
        b = rng.standard_normal(dim)
        # mix feasible and infeasible starting points
        c = rng.uniform(-0.1, 0.1)
        x, info = solve_cpo_step(g, b, lambda v: h_mat @ v, c, delta)
        kl = 0.5 * x @ h_mat @ x
        assert kl <= delta * (1 + 1e-6)
        if info["recovery"]:
            # infeasible case: verify it matches the max cost-reduction step
            s = b @ np.linalg.solve(h_mat, b)
            expected = -math.sqrt(2 * delta / s) * np.linalg.solve(h_mat, b)
            assert np.allclose(x, expected, rtol=1e-6, atol=1e-10)
        else:
            assert b @ x + c <= 1e-8
            oracle = numeric_qp(h_mat, g, b, c, delta)
            if oracle is not None:
                assert g @ x >= oracle - 1e-5 - 1e-4 * abs(oracle)


def test_constraint_off_equals_trust_region_step():
    rng = np.random.default_rng(1)
    dim = 8
    m = rng.standard_normal((dim, dim))
    h_mat = m @ m.T + np.eye(dim)
    g = rng.standard_normal(dim)

    def fvp(v):
        return h_mat @ v

    x, info = solve_cpo_step(g, np.zeros(dim), fvp, c=-0.05, delta=0.01)
    assert info["case"] == "trpo"
    hinv_g = conjugate_gradient(fvp, g, iters=50)
    expected = math.sqrt(2 * 0.01 / (g @ hinv_g)) * hinv_g
    assert np.linalg.norm(x - expected) <= 1e-6 * np.linalg.norm(expected)


def test_noop_when_nothing_to_do():
    x, info = solve_cpo_step(np.zeros(4), np.zeros(4), lambda v: v, c=-0.1,
                             delta=0.01)
    assert info["case"] == "noop"
    assert np.all(x == 0)


# ---------------------------------------------------------------------------
# full update behavior
# ---------------------------------------------------------------------------

def synthetic_trajectories(agent, seed, n_eps=6, T=10, zero_cost=False,
                           zero_reward=False):
    rng = np.random.default_rng(seed)
    trajs = []
    for _ in range(n_eps):
        obs = rng.uniform(0, 1, size=(T, 6))
        actions = rng.normal(0, 0.7, size=(T, 1))
        rewards = np.zeros(T) if zero_reward else rng.uniform(0.2, 0.9, size=T)
        costs = np.zeros(T) if zero_cost else rng.uniform(0, 0.03, size=T)
        trajs.append(Trajectory(obs, actions, rewards, costs,
                                beta_final=float(costs.sum())))
    return trajs


def zero_value_heads(agent):
    for vnet in (agent.value_r, agent.value_c):
        vnet.net.params[-2][...] = 0.0
        vnet.net.params[-1][...] = 0.0


def test_zero_advantage_leaves_policy_unchanged():
    # zero rewards/costs against exactly-zero value heads: advantages are
    # exactly zero, so the update is a no-op
    agent = CPOAgent(config=CFG, seed=2)
    zero_value_heads(agent)
    trajs = synthetic_trajectories(agent, 3, zero_cost=True, zero_reward=True)
    before = agent.policy.get_flat().copy()
    diag = agent.update(trajs)
    assert diag["case"] == "noop"
    assert np.array_equal(agent.policy.get_flat(), before)


def test_inactive_constraint_takes_trust_region_case():
    agent = CPOAgent(config=CFG, seed=4)
    trajs = synthetic_trajectories(agent, 5, zero_cost=True)
    diag = agent.update(trajs)
    assert diag["case"] == "trpo"
    assert diag["accepted"]


def test_accepted_step_respects_kl_bound():
    agent = CPOAgent(config=CFG, seed=6)
    for seed in range(4):
        diag = agent.update(synthetic_trajectories(agent, 10 + seed))
        if diag["accepted"]:
            assert diag["kl"] <= CFG.trust_region_bound + 1e-6


def test_update_deterministic():
    a = CPOAgent(config=CFG, seed=7)
    b = CPOAgent(config=CFG, seed=7)
    trajs = synthetic_trajectories(a, 8)
    a.update(trajs)
    b.update(trajs)
    assert np.array_equal(a.policy.get_flat(), b.policy.get_flat())
    assert np.array_equal(a.value_r.net.get_flat(), b.value_r.net.get_flat())


def test_shaping_appends_terminal_cost():
    cfg = CPOConfig(hidden=(8, 8), shaping_gamma=10.0, cost_limit=0.10)
    agent = CPOAgent(config=cfg, seed=9)
    traj = synthetic_trajectories(agent, 10, n_eps=1)[0]
    traj.beta_final = 0.20
    shaped = agent.shaped_costs(traj)
    assert shaped[-1] == pytest.approx(
        traj.costs[-1] + wc_terminal_cost(0.20, 0.10, 10.0))
    assert np.array_equal(shaped[:-1], traj.costs[:-1])
    plain = CPOAgent(config=CFG, seed=9)
    assert np.array_equal(plain.shaped_costs(traj), traj.costs)


def test_non_finite_advantages_raise():
    agent = CPOAgent(config=CFG, seed=11)
    trajs = synthetic_trajectories(agent, 12)
    trajs[0].rewards[3] = np.nan
    with pytest.raises(TrainingError):
        agent.update(trajs)


def test_wc_variant_reports_kind():
    assert CPOAgent(config=CFG, seed=0).kind_name == "cpo"
    assert CPOAgent(config=CPOConfig(shaping_gamma=5.0), seed=0).kind_name == "wc-cpo"
