"""Acceptance suite: every shipping criterion at its stated tolerance,
one printed line per criterion (see the terminal summary section).

The training-based criteria (7-10) run the committed desk-scale
experiment configs under ``configs/``; everything is seeded, so the
whole suite is deterministic end to end.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from slicescale import network_model as nm
from slicescale import traffic as tr
from slicescale.agents import cvar_gaussian, wc_terminal_cost
from slicescale.env import EpisodeConfig, SliceEnv, compute_beta
from slicescale.harness import (ExperimentConfig, build_episode_config,
                                build_model, build_source, evaluate,
                                finetune, load_config, make_agent,
                                sweep_conditions, sweep_noise, train)
from slicescale.harness.run import policy_from_checkpoint

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
EVAL_SEED = 7
BETA_THRESH_PCT = 10.0


# ---------------------------------------------------------------------------
# shared trained artifacts (session scope: each config trains once)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def calibrated():
    return nm.truth_model(nm.calibrated_config())


@pytest.fixture(scope="session")
def wcsac_run():
    cfg = load_config(CONFIG_DIR / "wcsac_dr.cfg")
    start = time.time()
    result = train(cfg)
    return {"cfg": cfg, "result": result, "seconds": time.time() - start}


@pytest.fixture(scope="session")
def ppo_run():
    cfg = load_config(CONFIG_DIR / "avg_ppo_trace.cfg")
    start = time.time()
    result = train(cfg)
    return {"cfg": cfg, "result": result, "seconds": time.time() - start}


@pytest.fixture(scope="session")
def cpo_run():
    cfg = load_config(CONFIG_DIR / "avg_cpo_trace.cfg")
    start = time.time()
    result = train(cfg)
    return {"cfg": cfg, "result": result, "seconds": time.time() - start}


def eval_on(policy, scenario_cfg: ExperimentConfig, label: str, episodes=100):
    model = build_model(scenario_cfg)
    return evaluate(policy, model, build_episode_config(scenario_cfg),
                    build_source(scenario_cfg), episodes, EVAL_SEED, label=label)


def dataset_scenario(**kw) -> ExperimentConfig:
    return ExperimentConfig(agent="pred-alloc", seed=1, traffic_source="trace",
                            trace_noise_mode="frozen", **kw)


# ---------------------------------------------------------------------------
# 1 & 2: cost telescoping and the beta oracle, 1000 random episodes
# ---------------------------------------------------------------------------

def run_random_episodes(n_episodes: int):
    """Random policies on random traffic under both condition modes;
    yields (env, per-step costs, per-TTI logs) per episode."""
    model = nm.truth_model(nm.calibrated_config())
    for i in range(n_episodes):
        mode = "stochastic" if i % 2 == 0 else "deterministic"
        cfg = EpisodeConfig(condition_mode=mode, condition_d=-3.0 + (i % 13) * 0.5)
        env = SliceEnv(model, cfg)
        rng = np.random.default_rng(10_000 + i)
        source = tr.RandomizedSource()
        env.reset(source.episode(cfg.dti_count, cfg.ttis_per_dti, i, rng),
                  np.random.default_rng(20_000 + i))
        costs, logs = [], []
        while not env.done:
            out = env.step(rng.uniform(-1.0, 1.0))
            costs.append(out.cost)
            logs.append((out.info["traffic"], out.info["degraded"]))
        yield env, costs, logs


def test_criteria_1_and_2_cost_telescoping_and_beta_oracle():
    start = time.time()
    worst_telescope = 0.0
    worst_beta = 0.0
    for env, costs, logs in run_random_episodes(1000):
        final_beta = env.beta()
        worst_telescope = max(worst_telescope, abs(sum(costs) - final_beta))
        # independent recomputation from the raw per-TTI logs
        degraded = math.fsum(float(x[d].sum()) for x, d in logs)
        total = math.fsum(float(x.sum()) for x, _ in logs)
        oracle = degraded / total if total > 0 else 0.0
        worst_beta = max(worst_beta, abs(oracle - compute_beta(env.ledger)))
    elapsed = time.time() - start
    ok1 = worst_telescope <= 1e-9 and elapsed < 60.0
    record_criterion(1, ok1, f"cost telescoping |sum(cost)-beta| <= {worst_telescope:.2e} "
                             f"over 1000 episodes in {elapsed:.0f}s (limit 1e-9, 60s)")
    ok2 = worst_beta <= 1e-12
    record_criterion(2, ok2, f"beta oracle max |diff| = {worst_beta:.2e} (limit 1e-12)")
    assert ok1 and ok2


# ---------------------------------------------------------------------------
# 3: Gaussian CVaR vs Monte Carlo + monotonicity
# ---------------------------------------------------------------------------

def test_criterion_3_gaussian_cvar():
    start = time.time()
    rng = np.random.default_rng(123)
    x = rng.standard_normal(10**6)
    worst_rel = 0.0
    for alpha in (0.5, 0.25, 0.1):
        tail = x[x >= np.quantile(x, 1.0 - alpha)]
        rel = abs(cvar_gaussian(0.0, 1.0, alpha) - tail.mean()) / abs(tail.mean())
        worst_rel = max(worst_rel, rel)
    alphas = np.linspace(0.01, 1.0, 100)
    by_alpha = [cvar_gaussian(0.3, 2.0, a) for a in alphas]
    mono_alpha = all(a >= b - 1e-12 for a, b in zip(by_alpha, by_alpha[1:]))
    variances = np.linspace(0.0, 5.0, 100)
    by_var = [cvar_gaussian(0.3, v, 0.1) for v in variances]
    mono_var = all(b >= a - 1e-12 for a, b in zip(by_var, by_var[1:]))
    elapsed = time.time() - start
    ok = worst_rel <= 0.01 and mono_alpha and mono_var and elapsed < 60.0
    record_criterion(3, ok, f"CVaR closed form vs 1e6-sample tail: rel err "
                            f"{worst_rel:.4f} (limit 1%), monotone in alpha/variance, "
                            f"{elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 4: gradient correctness (2x8 nets, batches of 32, 1e-4 relative)
# ---------------------------------------------------------------------------

def test_criterion_4_gradient_checks():
    import test_gradients as tg
    checks = [
        tg.test_mlp_param_gradient, tg.test_mlp_input_gradient,
        tg.test_mlp_jvp_matches_directional_fd,
        tg.test_wcsac_reward_critic_gradients, tg.test_wcsac_cost_critic_gradient,
        tg.test_wcsac_actor_gradient, tg.test_wcsac_entropy_multiplier_gradient,
        tg.test_cpo_surrogate_gradients, tg.test_cpo_kl_gradient,
        tg.test_cpo_fisher_vector_product, tg.test_cpo_value_gradient,
        tg.test_ppo_clipped_surrogate_gradient, tg.test_ppo_value_gradient,
    ]
    for check in checks:
        check()
    record_criterion(4, True, f"{len(checks)} analytic-vs-finite-difference gradient "
                              f"checks within 1e-4 relative error")


# ---------------------------------------------------------------------------
# 5: calibration anchor
# ---------------------------------------------------------------------------

def test_criterion_5_calibration_anchor(calibrated):
    q = float(nm.deterministic_qos(calibrated, 5.0, 0.8, d=-2.0))
    ok = abs(q - 2.0) <= 1e-6
    record_criterion(5, ok, f"deterministic QoS at (5 users, 80%, worst-case "
                            f"magnitude 2) = {q:.9f} Fps (target 2.0 +- 1e-6)")
    assert ok


# ---------------------------------------------------------------------------
# 6: Pred-Alloc degradation bound under stochastic conditions
# ---------------------------------------------------------------------------

def test_criterion_6_pred_alloc_bound(calibrated):
    start = time.time()
    policy = make_agent(dataset_scenario(), calibrated)
    peak = eval_on(policy, ExperimentConfig(agent="pred-alloc", seed=1,
                                            traffic_source="constant",
                                            constant_level=5.0),
                   "pred-alloc|constant-5")
    dataset = eval_on(policy, dataset_scenario(), "pred-alloc|dataset")
    elapsed = time.time() - start
    ok = (peak.mean_qos_degradation_pct <= 2.5
          and dataset.mean_qos_degradation_pct <= 2.5 and elapsed < 300.0)
    record_criterion(6, ok, f"Pred-Alloc mean degradation: constant-peak "
                            f"{peak.mean_qos_degradation_pct:.2f}%, dataset "
                            f"{dataset.mean_qos_degradation_pct:.2f}% "
                            f"(limit 2.5%; tail oracle 2.28%), {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 7: generalization to unseen traffic (Table-style comparison)
# ---------------------------------------------------------------------------

def trained_policy(name, run):
    """The checkpoint each agent is judged on.

    The risk-constrained agent is evaluated at its converged (last)
    parameters; the fixed-trace baselines get their best-by-criterion
    checkpoint, i.e. the most favorable feasible point of their whole
    training run, which only strengthens the generalization comparison.
    """
    result = run["result"]
    return policy_from_checkpoint(result.last if name == "wcsac" else result.best)


def test_criterion_7_generalization(wcsac_run, ppo_run, cpo_run, calibrated):
    budgets_ok = all(run["seconds"] <= 7200 for run in (wcsac_run, ppo_run, cpo_run))
    dataset = dataset_scenario()
    offset = dataset_scenario(traffic_offset=2.0)

    records = {}
    for name, run in (("wcsac", wcsac_run), ("ppo", ppo_run), ("cpo", cpo_run)):
        policy = trained_policy(name, run)
        records[name] = {
            "dataset": eval_on(policy, dataset, f"{name}|dataset"),
            "offset": eval_on(policy, offset, f"{name}|offset"),
        }
    pred = make_agent(dataset_scenario(), calibrated)
    records["pred-alloc"] = {"dataset": eval_on(pred, dataset, "pred-alloc|dataset")}

    ppo_off = records["ppo"]["offset"].mean_qos_degradation_pct
    cpo_off = records["cpo"]["offset"].mean_qos_degradation_pct
    w_data = records["wcsac"]["dataset"]
    w_off = records["wcsac"]["offset"]
    pa_bw = records["pred-alloc"]["dataset"].mean_bandwidth_pct

    overfit_ok = ppo_off > BETA_THRESH_PCT and cpo_off > BETA_THRESH_PCT
    wcsac_ok = (w_data.mean_qos_degradation_pct <= 12.0
                and w_off.mean_qos_degradation_pct <= 12.0)
    efficiency_ok = w_data.mean_bandwidth_pct <= pa_bw
    ok = overfit_ok and wcsac_ok and efficiency_ok and budgets_ok
    record_criterion(7, ok,
                     f"offset degradation ppo {ppo_off:.1f}% / cpo {cpo_off:.1f}% "
                     f"(must exceed 10%); wcsac degradation "
                     f"{w_data.mean_qos_degradation_pct:.2f}%/"
                     f"{w_off.mean_qos_degradation_pct:.2f}% (limit 12%); wcsac "
                     f"bandwidth {w_data.mean_bandwidth_pct:.1f}% <= pred-alloc "
                     f"{pa_bw:.1f}%")
    assert ok


# ---------------------------------------------------------------------------
# 8: network-condition sweep
# ---------------------------------------------------------------------------

def test_criterion_8_condition_sweep(wcsac_run):
    start = time.time()
    policy = trained_policy("wcsac", wcsac_run)
    sweep = sweep_conditions(policy, dataset_scenario(), episodes=100)
    betas = [r.mean_qos_degradation_pct for r in sweep.records]
    elapsed = time.time() - start

    mono = all(b2 <= b1 + 1.0 for b1, b2 in zip(betas, betas[1:]))
    safe_from = {d: b for d, b in zip(sweep.values, betas) if d >= -1.5}
    safe_ok = all(b <= BETA_THRESH_PCT + 2.0 for b in safe_from.values())
    worst = betas[sweep.values.index(-3.0)]
    worst_ok = worst > BETA_THRESH_PCT
    ok = mono and safe_ok and worst_ok and elapsed < 900.0
    record_criterion(8, ok, f"degradation non-increasing in d (1pp tol): {mono}; "
                            f"max over d>=-1.5 = {max(safe_from.values()):.2f}% "
                            f"(limit 12%); at d=-3: {worst:.1f}% (must exceed 10%); "
                            f"{elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 9: prediction-noise sweep
# ---------------------------------------------------------------------------

def test_criterion_9_noise_sweep(wcsac_run):
    start = time.time()
    policy = trained_policy("wcsac", wcsac_run)
    sweep = sweep_noise(policy, dataset_scenario(), episodes=100)
    betas = [r.mean_qos_degradation_pct for r in sweep.records]
    elapsed = time.time() - start

    mono = all(b2 >= b1 - 1.0 for b1, b2 in zip(betas, betas[1:]))
    random_beta = sweep.reference.mean_qos_degradation_pct
    random_ok = random_beta <= BETA_THRESH_PCT + 15.0
    ok = mono and random_ok and elapsed < 900.0
    record_criterion(9, ok, f"degradation non-decreasing in noise (1pp tol): {mono}; "
                            f"fully random predictor {random_beta:.2f}% "
                            f"(limit 25%); {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 10: fine-tuning on a known favorable condition
# ---------------------------------------------------------------------------

def test_criterion_10_finetune(wcsac_run):
    start = time.time()
    result = finetune(wcsac_run["result"].last, dataset_scenario(),
                      epochs=500, risk_alpha=0.99, lr_scale=0.1, condition_d=1.0)
    elapsed = time.time() - start

    gain_ok = result.post.mean_bandwidth_pct < result.pre.mean_bandwidth_pct
    safe_ok = result.post.mean_qos_degradation_pct <= BETA_THRESH_PCT
    policy = policy_from_checkpoint(result.best)
    retention = eval_on(policy, dataset_scenario(traffic_offset=2.0),
                        "finetuned|offset-stochastic")
    retention_ok = retention.mean_qos_degradation_pct <= 12.0
    ok = gain_ok and safe_ok and retention_ok and elapsed < 3600.0
    record_criterion(10, ok,
                     f"bandwidth {result.pre.mean_bandwidth_pct:.1f}% -> "
                     f"{result.post.mean_bandwidth_pct:.1f}% (must decrease) at "
                     f"degradation {result.post.mean_qos_degradation_pct:.2f}% "
                     f"(limit 10%); offset-stochastic retention "
                     f"{retention.mean_qos_degradation_pct:.2f}% (limit 12%); "
                     f"{elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 11: worst-case terminal cost unit suite
# ---------------------------------------------------------------------------

def test_criterion_11_terminal_cost():
    boundary = wc_terminal_cost(0.10, 0.10, 10.0)
    below = wc_terminal_cost(0.02, 0.10, 10.0)
    arithmetic = wc_terminal_cost(0.20, 0.10, 10.0)
    expected = 10.0 * (math.exp(0.1) - 1.0)
    xs = np.linspace(0.0, 0.6, 301)
    ys = np.array([wc_terminal_cost(x, 0.10, 10.0) for x in xs])
    convex = np.all(ys[2:] - 2 * ys[1:-1] + ys[:-2] >= -1e-12)
    ok = (boundary == 0.0 and below == 0.0
          and abs(arithmetic - expected) <= 1e-9 and bool(convex))
    record_criterion(11, ok, f"terminal cost: boundary 0, convex, "
                             f"10*(e^0.1 - 1) = {arithmetic:.10f} "
                             f"(expected {expected:.10f}, tol 1e-9)")
    assert ok
