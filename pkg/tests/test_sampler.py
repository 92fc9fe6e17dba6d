import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from bremark.constraints import ConstraintSystem, apply_B, total_errors, zero_error_config
from bremark.histories import HistoryUniverse
from bremark.model import CaptureParams
from bremark.oracle import enumerate_fibre, exact_conditional_posterior, exact_observed_likelihood
from bremark.sampler import (
    ObservedData,
    SamplerConfig,
    check_state,
    init_chain,
    parameter_names,
    posterior_summary,
    reference_chain,
    run,
    x_hash,
)
from bremark.simulate import StudyDesign, capture_counts, corrupt_bre, simulate_cjs, study_phi_groups


def counts_of(T, spec):
    u = HistoryUniverse(T)
    n = np.zeros(u.I, dtype=np.int64)
    for h, c in spec:
        n[u.index_of_observed(h)] += c
    return n


def fixed_theta(**kw):
    base = dict(update_theta=False, init_phi=0.7, init_p=0.6, alpha=0.6, burnin=1000, seed=3)
    base.update(kw)
    return SamplerConfig(**base)


def empirical(result, fibre, T):
    pos = {x_hash(x, T): r for r, x in enumerate(fibre.elements)}
    assert len(pos) == len(fibre)  # no collisions on this fibre
    freq = np.zeros(len(fibre))
    for h, k in Counter(result.x_hashes.tolist()).items():
        freq[pos[h]] += k
    return freq / freq.sum()


def test_init_chain_two_occasions():
    n = counts_of(2, [((1, 1), 1), ((1, 0), 1)])
    data = ObservedData(2, n)
    state = init_chain(data, SamplerConfig(init_phi=0.5, init_p=0.5))
    dense = np.zeros(data.universe.J, dtype=np.int64)
    for j, c in state.x.items():
        dense[j] = c
    assert np.array_equal(dense, zero_error_config(n, data.universe))
    assert dense.tolist() == [1, 1, 0, 0]
    assert state.z.tolist() == [1, 1]
    assert np.isfinite(state.log_joint)


def test_init_chain_draws_grouped_prior_values():
    data = ObservedData(4, np.zeros(HistoryUniverse(4).I, dtype=np.int64))
    state = init_chain(data, SamplerConfig(phi_groups=[0, 0, 1], p_groups=[0, 0, 0], seed=5))
    assert state.theta1.phi[0] == state.theta1.phi[1] != state.theta1.phi[2]
    assert len(set(state.theta1.p)) == 1


def test_init_rejects_final_occasion_release():
    with pytest.raises(ValueError):
        ObservedData.from_histories([(0, 0, 1)], 3)
    with pytest.raises(ValueError):
        ObservedData(3, [1, 2])


def test_empty_data_runs_trivially():
    data = ObservedData(3, np.zeros(HistoryUniverse(3).I, dtype=np.int64))
    res = run(data, SamplerConfig(iterations=300, burnin=50, seed=1))
    assert res.theta.shape == (250, 2 * 3 - 1)
    assert not res.errors.any()
    assert res.diagnostics.x_accepted == 0
    assert res.final_x == {}


def test_known_alpha_stays_constant():
    n = counts_of(3, [((1, 1, 0), 3), ((1, 0, 1), 2), ((0, 1, 0), 2)])
    res = run(ObservedData(3, n), SamplerConfig(iterations=500, burnin=100, alpha=8 / 9))
    assert np.all(res.theta[:, -1] == 8 / 9)
    assert res.names == parameter_names(3) == ["phi_1", "phi_2", "p_2", "p_3", "alpha"]


def test_same_seed_gives_identical_runs():
    n = counts_of(3, [((1, 1, 0), 3), ((1, 0, 1), 2), ((0, 1, 1), 2)])
    data = ObservedData(3, n)
    cfg = SamplerConfig(iterations=800, burnin=100, seed=9, x_steps=2, alpha=0.7)
    a, b = run(data, cfg), run(data, cfg)
    for field in ("theta", "errors", "log_joint", "iterations", "x_hashes"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    c = run(data, SamplerConfig(iterations=800, burnin=100, seed=10, x_steps=2, alpha=0.7))
    assert not np.array_equal(a.theta, c.theta)


def test_chunk_size_keeps_iteration_bookkeeping():
    n = counts_of(3, [((1, 1, 0), 3), ((1, 0, 1), 2), ((0, 1, 1), 2)])
    data = ObservedData(3, n)
    a = run(data, SamplerConfig(iterations=900, burnin=150, seed=2, chunk=1000, alpha=0.7))
    b = run(data, SamplerConfig(iterations=900, burnin=150, seed=2, chunk=37, alpha=0.7))
    # random buffers are drawn per chunk, so draws differ but the layout must not
    assert a.theta.shape == b.theta.shape
    assert np.array_equal(a.iterations, b.iterations)


def test_thinning_keeps_every_kth_draw():
    n = counts_of(2, [((1, 1), 2), ((1, 0), 2)])
    res = run(ObservedData(2, n), SamplerConfig(iterations=1000, burnin=100, thin=7))
    assert res.iterations[0] == 100
    assert np.all(np.diff(res.iterations) == 7)


def test_prior_recovery_without_data():
    data = ObservedData(3, np.zeros(HistoryUniverse(3).I, dtype=np.int64))
    res = run(data, SamplerConfig(iterations=101_000, burnin=1_000, thin=10, seed=4,
                                  estimate_alpha=True, alpha=0.9))
    assert res.theta.shape[0] == 10_000
    for i, name in enumerate(res.names[:-1]):
        assert stats.kstest(res.theta[:, i], "uniform").statistic < 0.05, name
    assert stats.kstest(res.theta[:, -1], stats.beta(19, 1).cdf).statistic < 0.05
    s = posterior_summary(res)["phi_1"]
    assert s["mean"] == pytest.approx(0.5, abs=0.03)
    assert s["lower"] == pytest.approx(0.025, abs=0.02)
    assert s["upper"] == pytest.approx(0.975, abs=0.02)


def test_two_point_fibre_matches_exact_posterior():
    # one individual seen twice and one seen once: either no error or one swap
    n = counts_of(2, [((1, 1), 1), ((1, 0), 1)])
    u = HistoryUniverse(2)
    fibre = enumerate_fibre(n, u)
    assert len(fibre) == 2
    theta = CaptureParams.constant(2, 0.7, 0.6)
    exact = exact_conditional_posterior(fibre, theta, 0.6)
    for algorithm in ("dynamic", "fixed"):
        res = run(ObservedData(2, n), fixed_theta(iterations=101_000, algorithm=algorithm))
        emp = empirical(res, fibre, 2)
        assert np.abs(emp - exact).sum() / 2 < 0.01, algorithm


@pytest.mark.parametrize("T,spec", [
    (3, [((1, 1, 0), 2), ((1, 0, 1), 1), ((1, 0, 0), 2), ((0, 1, 1), 1), ((0, 1, 0), 1)]),
    (4, [((1, 1, 0, 0), 1), ((1, 0, 1, 0), 1), ((0, 1, 0, 1), 1), ((0, 0, 1, 0), 2)]),
])
def test_dynamic_chain_matches_exact_posterior(T, spec):
    n = counts_of(T, spec)
    fibre = enumerate_fibre(n, HistoryUniverse(T))
    assert 5 < len(fibre) <= 200
    theta = CaptureParams.constant(T, 0.7, 0.6)
    exact = exact_conditional_posterior(fibre, theta, 0.6)
    res = run(ObservedData(T, n), fixed_theta(iterations=201_000))
    assert np.abs(empirical(res, fibre, T) - exact).sum() / 2 < 0.03


def test_joint_posterior_matches_grid_integration():
    T = 3
    n = counts_of(T, [((1, 1, 0), 2), ((1, 0, 1), 1), ((1, 0, 0), 1), ((0, 1, 1), 2)])
    u = HistoryUniverse(T)
    fibre = enumerate_fibre(n, u)
    alpha = 0.7
    G = 50
    g = (np.arange(G) + 0.5) / G
    L = np.array([[exact_observed_likelihood(n, CaptureParams.constant(T, ph, p), alpha, fibre, log=True)
                   for p in g] for ph in g])
    W = np.exp(L - L.max())
    W /= W.sum()
    exact_phi, exact_p = (W.sum(1) * g).sum(), (W.sum(0) * g).sum()
    res = run(ObservedData(T, n), SamplerConfig(iterations=150_000, burnin=10_000, seed=4, alpha=alpha,
                                                phi_groups=[0, 0], p_groups=[0, 0], x_steps=2))
    for col, want in ((0, exact_phi), (T - 1, exact_p)):
        draws = res.theta[:, col]
        se = draws.std() / math.sqrt(res.diagnostics.ess[res.names[col]])
        # the midpoint grid itself is accurate to well under 0.005 here
        assert abs(draws.mean() - want) < 4 * se + 0.005


def test_reference_chain_checks_every_proposal():
    n = counts_of(3, [((1, 1, 0), 2), ((1, 0, 1), 2), ((1, 0, 0), 1), ((0, 1, 1), 2), ((0, 1, 0), 1)])
    data = ObservedData(3, n)
    state, trace = reference_chain(data, SamplerConfig(iterations=2000, burnin=100, alpha=0.5, seed=6))
    assert len(trace) == 2000
    assert state.x_accepted > 100
    assert state.reverse_checked == state.x_proposed - state.x_empty
    check_state(state.x, state.z, data)
    fixed, _ = reference_chain(data, SamplerConfig(iterations=500, burnin=100, alpha=0.5,
                                                   algorithm="fixed", update_theta=False,
                                                   init_phi=0.7, init_p=0.5))
    check_state(fixed.x, fixed.z, data)


def test_reference_chain_matches_exact_posterior():
    n = counts_of(3, [((1, 1, 0), 2), ((1, 0, 1), 1), ((1, 0, 0), 2), ((0, 1, 1), 1), ((0, 1, 0), 1)])
    T = 3
    u = HistoryUniverse(T)
    fibre = enumerate_fibre(n, u)
    exact = exact_conditional_posterior(fibre, CaptureParams.constant(T, 0.7, 0.6), 0.6)
    _, trace = reference_chain(ObservedData(T, n), fixed_theta(iterations=30_000), check=False)
    freq = np.zeros(len(fibre))
    for key, k in Counter(trace[2000:]).items():
        freq[fibre.position(dict(key))] += k
    assert np.abs(freq / freq.sum() - exact).sum() / 2 < 0.05


def test_single_point_fibre_counts_retained_steps_as_rejections():
    # everyone seen on every occasion: no recipients, so no error can be added
    n = counts_of(3, [((1, 1, 1), 4), ((0, 1, 1), 2)])
    res = run(ObservedData(3, n), fixed_theta(iterations=2000, burnin=0))
    d = res.diagnostics
    assert d.x_proposed == 2000
    assert d.x_accepted == 0
    assert d.x_empty == 2000
    assert d.distinct_x == d.distinct_x_all == 1


def test_distinct_count_is_bounded_by_steps():
    n = counts_of(4, [((1, 1, 0, 0), 3), ((1, 0, 1, 0), 3), ((0, 1, 0, 1), 2), ((0, 0, 1, 0), 2)])
    res = run(ObservedData(4, n), SamplerConfig(iterations=3000, burnin=500, x_steps=3, alpha=0.5))
    d = res.diagnostics
    assert d.distinct_x <= d.retained_x_steps
    assert d.distinct_x_all <= d.x_proposed + 1
    assert 0 < d.x_acceptance <= 1
    assert d.retained_x_steps == 2500 * 3


def test_error_trace_matches_final_configuration():
    n = counts_of(4, [((1, 1, 0, 0), 3), ((1, 0, 1, 0), 3), ((0, 1, 0, 1), 2), ((0, 0, 1, 0), 2)])
    data = ObservedData(4, n)
    res = run(data, SamplerConfig(iterations=400, burnin=10, x_steps=2, alpha=0.5))
    assert res.x_errors[-1, -1] == res.errors[-1] == total_errors(res.final_x, data.sys).sum()
    check_state(res.final_x, apply_B(res.final_x, ConstraintSystem(data.universe)), data)


def test_model1_recovers_first_survival_rate():
    design = StudyDesign.overwinter()
    rng = np.random.default_rng(21)
    estimates = []
    for _ in range(5):
        truth = simulate_cjs(design.releases, design.theta1, rng)
        data = ObservedData(10, capture_counts(truth, 10))
        res = run(data, SamplerConfig(iterations=6000, burnin=1000, update_x=False, seed=1,
                                      phi_groups=study_phi_groups(10), init_phi=0.5, init_p=0.5))
        estimates.append(posterior_summary(res)["phi_1"]["mean"])
    assert np.mean(estimates) == pytest.approx(0.66, abs=0.08)


def test_model2_ignoring_errors_inflates_survival():
    design = StudyDesign.overwinter()
    rng = np.random.default_rng(5)
    diffs = []
    for _ in range(4):
        truth = simulate_cjs(design.releases, design.theta1, rng)
        noisy = corrupt_bre(truth, 6 / 9, rng).n
        kw = dict(iterations=5000, burnin=1000, update_x=False, seed=1,
                  phi_groups=study_phi_groups(10), init_phi=0.5, init_p=0.5)
        clean = run(ObservedData(10, capture_counts(truth, 10)), SamplerConfig(**kw))
        dirty = run(ObservedData(10, noisy), SamplerConfig(**kw))
        diffs.append(dirty.theta[:, 0].mean() - clean.theta[:, 0].mean())
    assert np.mean(diffs) > 0.05


@pytest.mark.parametrize("kw", [
    dict(algorithm="gibbs"),
    dict(iterations=10, burnin=10),
    dict(burnin=-1),
    dict(thin=0),
    dict(x_steps=-1),
    dict(alpha=1.5),
    dict(step_size=0.0),
    dict(chunk=0),
    dict(estimate_alpha=True, alpha_prior=(0.0, 1.0)),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SamplerConfig(**kw)


def test_bad_groups_rejected():
    data = ObservedData(3, counts_of(3, [((1, 1, 0), 1)]))
    with pytest.raises(ValueError):
        run(data, SamplerConfig(iterations=10, burnin=0, phi_groups=[0]))
