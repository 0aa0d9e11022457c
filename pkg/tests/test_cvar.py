"""Gaussian CVaR closed form against frozen arithmetic, a million-sample
Monte Carlo tail oracle, and its monotonicity properties.
"""

import numpy as np
import pytest

from slicescale.agents import cvar_gaussian


def test_degenerate_variance_returns_mean():
    assert cvar_gaussian(3.7, 0.0, 0.1) == 3.7
    assert cvar_gaussian(-2.0, 0.0, 0.5) == -2.0


def test_closed_form_frozen_values():
    # pdf(ppf(0.5))/0.5 etc., computed once and frozen
    assert cvar_gaussian(0.0, 1.0, 0.5) == pytest.approx(0.7978845608028654, abs=1e-12)
    assert cvar_gaussian(0.0, 1.0, 0.25) == pytest.approx(1.271106290736428, abs=1e-12)
    assert cvar_gaussian(0.0, 1.0, 0.1) == pytest.approx(1.7549833193248683, abs=1e-12)


def test_location_scale():
    base = cvar_gaussian(0.0, 1.0, 0.1)
    assert cvar_gaussian(2.0, 9.0, 0.1) == pytest.approx(2.0 + 3.0 * base, rel=1e-12)


def test_monte_carlo_tail_oracle():
    # empirical mean of the worst alpha tail of 1e6 N(0,1) samples, 1% rel
    rng = np.random.default_rng(123)
    x = rng.standard_normal(10**6)
    for alpha in (0.5, 0.25, 0.1):
        tail = x[x >= np.quantile(x, 1.0 - alpha)]
        assert cvar_gaussian(0.0, 1.0, alpha) == pytest.approx(tail.mean(), rel=0.01)


def test_monotone_in_risk_level():
    alphas = np.linspace(0.01, 1.0, 100)
    values = [cvar_gaussian(0.5, 2.0, a) for a in alphas]
    assert all(v1 >= v2 - 1e-12 for v1, v2 in zip(values, values[1:]))


def test_monotone_in_variance():
    variances = np.linspace(0.0, 5.0, 100)
    values = [cvar_gaussian(0.5, v, 0.1) for v in variances]
    assert all(v2 >= v1 - 1e-12 for v1, v2 in zip(values, values[1:]))


def test_risk_neutral_limit():
    # alpha -> 1 recovers the mean; at 0.999 within 0.01 * sqrt(variance)
    for var in (0.5, 1.0, 4.0):
        assert abs(cvar_gaussian(1.0, var, 0.999) - 1.0) <= 0.01 * np.sqrt(var)
    assert cvar_gaussian(1.0, 4.0, 1.0) == 1.0


def test_input_validation():
    with pytest.raises(ValueError):
        cvar_gaussian(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        cvar_gaussian(0.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        cvar_gaussian(0.0, -1.0, 0.5)
