import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bremark.constraints import ConstraintSystem, apply_B, zero_error_config
from bremark.histories import HistoryUniverse
from bremark.model import (
    CaptureParams,
    ErrorParam,
    SufficientStats,
    cjs_history_logprob,
    cjs_loglik_from_summary,
    cjs_summary,
    log_beta_prior,
    log_choose,
    log_joint,
    log_pi_x_given_z,
    log_pi_z,
    log_prior_theta1,
    log_trunc_binom,
    logsumexp,
    stats_from,
    xlog,
)

TH2 = CaptureParams.constant(2, 0.8, 0.5)


def cjs_direct(xi, phi, p):
    """Sum over death times of a history's probability (independent of the chi recursion)."""
    T = len(xi)
    f = xi.index(1)
    last = max(i for i, v in enumerate(xi) if v)
    total = 0.0
    # individual alive through occasion d (0-based), dead before d + 1 (d = T - 1: alive at end)
    for d in range(last, T):
        pr = 1.0
        for t in range(f, d):
            pr *= phi[t]
            pr *= p[t] if xi[t + 1] else 1.0 - p[t]
        if d < T - 1:
            pr *= 1.0 - phi[d]
        total += pr
    return total


def test_cjs_examples():
    assert math.isclose(cjs_history_logprob((1, 1), TH2), math.log(0.4))
    assert math.isclose(cjs_history_logprob((1, 0), TH2), math.log(0.6))
    th = CaptureParams.constant(3, 1.0, 1.0)
    assert cjs_history_logprob((1, 1, 0), th) == -math.inf
    with pytest.raises(ValueError):
        cjs_history_logprob((0, 1), TH2)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.data())
def test_cjs_matches_death_time_sum(T, data):
    phi = data.draw(st.lists(st.floats(0.01, 0.99), min_size=T - 1, max_size=T - 1))
    p = data.draw(st.lists(st.floats(0.01, 0.99), min_size=T - 1, max_size=T - 1))
    th = CaptureParams(phi, p)
    u = HistoryUniverse(T)
    k = data.draw(st.integers(0, u.K - 1))
    xi = u.capture_at(k)
    assert math.isclose(math.exp(cjs_history_logprob(xi, th)), cjs_direct(xi, phi, p), rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.data())
def test_cjs_cohorts_sum_to_one(T, data):
    phi = data.draw(st.lists(st.floats(0.0, 1.0), min_size=T - 1, max_size=T - 1))
    p = data.draw(st.lists(st.floats(0.0, 1.0), min_size=T - 1, max_size=T - 1))
    th = CaptureParams(phi, p)
    u = HistoryUniverse(T)
    totals = np.zeros(T - 1)
    for xi in u.latent_capture:
        totals[xi.index(1)] += math.exp(cjs_history_logprob(xi, th))
    assert np.allclose(totals, 1.0, atol=1e-12, rtol=0)


def test_log_pi_z_examples(uni2):
    assert log_pi_z(np.zeros(2, int), TH2, [0], uni2) == 0.0
    assert math.isclose(log_pi_z(np.array([1, 1]), TH2, [2], uni2), math.log(0.48))
    assert log_pi_z(np.array([1, 1]), TH2, [3], uni2) == -math.inf


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.data())
def test_summary_loglik_matches_history_sum(T, data):
    u = HistoryUniverse(T)
    z = np.array(data.draw(st.lists(st.integers(0, 3), min_size=u.K, max_size=u.K)))
    phi = data.draw(st.lists(st.floats(0.05, 0.95), min_size=T - 1, max_size=T - 1))
    p = data.draw(st.lists(st.floats(0.05, 0.95), min_size=T - 1, max_size=T - 1))
    th = CaptureParams(phi, p)
    direct = sum(z[k] * cjs_history_logprob(u.capture_at(k), th) for k in range(u.K))
    assert math.isclose(cjs_loglik_from_summary(cjs_summary(z, u), th), direct, rel_tol=1e-10, abs_tol=1e-10)


def test_trunc_binom_examples():
    assert math.isclose(math.exp(log_trunc_binom(0, 2, 3, 0.5)), 1 / 3)
    assert math.isclose(math.exp(log_trunc_binom(1, 2, 3, 0.5)), 2 / 3)
    assert log_trunc_binom(2, 2, 3, 0.5) == -math.inf
    # untruncated: plain binomial(m, 1 - alpha)
    for e in range(4):
        expect = math.comb(3, e) * 0.3**e * 0.7 ** (3 - e)
        assert math.isclose(math.exp(log_trunc_binom(e, 3, 10, 0.7)), expect)
    assert log_trunc_binom(0, 4, 9, 1.0) == 0.0
    assert log_trunc_binom(1, 4, 9, 1.0) == -math.inf
    with pytest.raises(ValueError):
        log_trunc_binom(0, 5, 3, 0.5)


def test_trunc_binom_normalises_on_grid():
    for m in range(0, 31):
        for M in range(m, 61):
            for alpha in np.arange(1, 10) / 10:
                total = sum(math.exp(log_trunc_binom(e, m, M, alpha)) for e in range(min(m, M - m) + 1))
                assert abs(total - 1.0) < 1e-12


def test_stats_examples(uni2, sys2):
    s = stats_from(None, np.array([1, 1]), [2], sys2)
    assert s.M.tolist() == [2] and s.m.tolist() == [1] and s.mstar.tolist() == [1]
    x0 = zero_error_config([1, 1], uni2)
    assert not stats_from(x0, np.array([1, 1]), [2], sys2).e.any()
    u3 = HistoryUniverse(3)
    s3 = ConstraintSystem(u3)
    empty = stats_from(np.zeros(u3.J, int), np.zeros(u3.K, int), [0, 0], s3)
    assert not (empty.M.any() or empty.m.any() or empty.e.any())


def test_t2_fibre_joint_values(sys2):
    n_ext = [1, 1, 0]
    for x in ([1, 1, 0, 0], [0, 0, 1, 1]):
        x = np.array(x)
        lj = log_joint(x, apply_B(x, sys2), TH2, 0.5, n_ext, sys2)
        assert math.isclose(lj, math.log(0.24))
    outside = np.array([0, 0, 1, 0])
    assert log_joint(outside, apply_B(outside, sys2), TH2, 0.5, n_ext, sys2) == -math.inf
    # wrong z
    x = np.array([1, 1, 0, 0])
    assert log_joint(x, np.array([2, 0]), TH2, 0.5, n_ext, sys2) == -math.inf


def test_error_free_configuration_term(uni2, sys2):
    x0 = zero_error_config([3, 2], uni2)
    z = apply_B(x0, sys2)
    stats = stats_from(x0, z, [5], sys2)
    for alpha in (0.2, 0.5, 0.9):
        expect = log_trunc_binom(0, 2, 5, alpha)
        assert math.isclose(log_pi_x_given_z(x0, z, alpha, stats, sys2), expect)


def test_alpha_one_rules_out_errors(sys2):
    x = np.array([0, 0, 1, 1])
    z = apply_B(x, sys2)
    stats = stats_from(x, z, [2], sys2)
    assert log_pi_x_given_z(x, z, 1.0, stats, sys2) == -math.inf


@pytest.mark.parametrize("c", [2, 3, 5])
@pytest.mark.parametrize("alpha", [0.6, 0.8, 0.95])
def test_error_mass_per_labelling_decreases(uni2, sys2, c, alpha):
    # x_k = (c-k, c-k, k, k) has k errors and C(c, k) distinct labelled error sets
    vals = []
    for k in range(c + 1):
        x = np.array([c - k, c - k, k, k])
        z = apply_B(x, sys2)
        stats = stats_from(x, z, [2 * c], sys2)
        vals.append(log_pi_x_given_z(x, z, alpha, stats, sys2) - log_choose(c, k))
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_joint_decomposes(sys2, uni2):
    x = np.array([1, 2, 1, 1])
    z = apply_B(x, sys2)
    n_ext = np.array([2, 3, 0])
    th = CaptureParams.constant(2, 0.7, 0.4)
    stats = stats_from(x, z, [5], sys2)
    expect = log_pi_z(z, th, [5], uni2) + log_pi_x_given_z(x, z, 0.8, stats, sys2)
    assert math.isclose(log_joint(x, z, th, ErrorParam(0.8), n_ext, sys2), expect)


def test_numerics():
    assert xlog(0, 0.0) == 0.0
    assert xlog(2, 0.0) == -math.inf
    assert logsumexp([]) == -math.inf
    assert math.isclose(logsumexp([math.log(0.25), math.log(0.5)]), math.log(0.75))
    assert math.isclose(log_choose(10, 3), math.log(120))
    assert log_prior_theta1(TH2) == 0.0
    assert math.isclose(log_beta_prior(0.9, 19, 1), math.log(19 * 0.9**18))


def test_param_validation():
    with pytest.raises(ValueError):
        CaptureParams([1.2], [0.5])
    with pytest.raises(ValueError):
        CaptureParams([0.5, 0.5], [0.5])
    with pytest.raises(ValueError):
        ErrorParam(1.5)
    with pytest.raises(ValueError):
        ErrorParam(0.9, estimate=True, prior=(0, 1))
    s = SufficientStats(a=[3, 2], M=[3, 5], m=[2, 4])
    assert s.mstar.tolist() == [1, 1]
