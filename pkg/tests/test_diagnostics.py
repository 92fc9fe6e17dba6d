import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bremark.diagnostics import autocorrelation, effective_sample_size, summarize


def test_autocorrelation_lag_zero_is_one():
    rng = np.random.default_rng(0)
    rho = autocorrelation(rng.standard_normal(500))
    assert rho[0] == pytest.approx(1.0)
    assert np.all(np.abs(rho[1:20]) < 0.2)


def test_autocorrelation_matches_direct_sum():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(64)
    d = x - x.mean()
    direct = np.array([np.dot(d[: len(d) - k], d[k:]) for k in range(len(d))]) / np.dot(d, d)
    assert np.allclose(autocorrelation(x), direct, atol=1e-12)


def test_ess_of_independent_draws_is_near_length():
    rng = np.random.default_rng(2)
    n = 20_000
    ess = effective_sample_size(rng.standard_normal(n))
    assert 0.85 * n < ess < 1.15 * n


@pytest.mark.parametrize("rho", [0.5, 0.9])
def test_ess_of_ar1_matches_theory(rho):
    rng = np.random.default_rng(3)
    n = 100_000
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    theory = n * (1 - rho) / (1 + rho)
    assert effective_sample_size(x) == pytest.approx(theory, rel=0.15)


def test_constant_chain():
    assert effective_sample_size(np.full(100, 0.3)) == 100.0
    s = summarize(np.full((100, 1), 0.3), ["a"])["a"]
    assert s["mean"] == s["lower"] == s["upper"] == pytest.approx(0.3)


def test_summarize_quantiles():
    x = np.linspace(0, 1, 100_001)
    s = summarize(np.column_stack([x, 2 * x]), ["u", "v"])
    assert s["u"]["mean"] == pytest.approx(0.5)
    assert s["u"]["lower"] == pytest.approx(0.025)
    assert s["u"]["upper"] == pytest.approx(0.975)
    assert s["v"]["upper"] == pytest.approx(1.95)


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize(np.zeros((0, 2)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=300))
def test_ess_is_positive_and_bounded(values):
    ess = effective_sample_size(values)
    n = len(values)
    assert 0 < ess <= max(n, n * np.log10(n)) + 1e-9
