import math
from itertools import combinations_with_replacement

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bremark.constraints import ConstraintSystem, extend_counts, in_fibre, total_errors, zero_error_config
from bremark.histories import HistoryUniverse
from bremark.model import CaptureParams, ErrorParam
from bremark.oracle import (
    FibreSizeError,
    check_connectivity,
    enumerate_fibre,
    exact_conditional_posterior,
    exact_observed_likelihood,
    reduction_path_to_zero,
)

from conftest import random_counts


def brute_fibre(n, u):
    """Every x with sum(x) = sum(n) checked against the dense A."""
    s = ConstraintSystem(u)
    A = s.A
    n_ext = extend_counts(n, s)
    N = int(np.sum(n))
    out = set()
    for combo in combinations_with_replacement(range(u.J), N):
        x = np.bincount(np.array(combo, dtype=int), minlength=u.J)
        if np.array_equal(A @ x, n_ext):
            out.add(tuple(sorted((int(j), int(c)) for j, c in enumerate(x) if c)))
    return out


def as_keys(f):
    return {tuple(sorted(x.items())) for x in f.elements}


def test_t2_fibre(uni2):
    f = enumerate_fibre([1, 1], uni2)
    assert as_keys(f) == {((0, 1), (1, 1)), ((2, 1), (3, 1))}
    assert f.dense().tolist() in ([[1, 1, 0, 0], [0, 0, 1, 1]], [[0, 0, 1, 1], [1, 1, 0, 0]])


def test_empty_fibre():
    u = HistoryUniverse(3)
    f = enumerate_fibre(np.zeros(u.I, int), u)
    assert f.elements == [{}]
    th = CaptureParams.constant(3, 0.7, 0.4)
    assert exact_observed_likelihood(np.zeros(u.I, int), th, 0.9, f) == 1.0


@pytest.mark.parametrize("T,N,seed", [(2, 4, 0), (2, 6, 1), (3, 2, 2), (3, 3, 3), (3, 4, 4), (3, 4, 5)])
def test_enumeration_matches_brute_force(T, N, seed):
    rng = np.random.default_rng(seed)
    u = HistoryUniverse(T)
    n = random_counts(rng, T, N)
    f = enumerate_fibre(n, u)
    assert as_keys(f) == brute_fibre(n, u)
    assert len(as_keys(f)) == len(f)


def test_t3_two_individual_example():
    u = HistoryUniverse(3)
    n = np.zeros(u.I, int)
    n[u.index_of_observed((1, 1, 0))] = 1
    n[u.index_of_observed((1, 0, 1))] = 1
    f = enumerate_fibre(n, u)
    assert as_keys(f) == brute_fibre(n, u)
    x0 = zero_error_config(n, u, sparse=True)
    assert tuple(sorted(x0.items())) in as_keys(f)
    assert len(f) == 4  # no swap, swap at 2, swap at 3, both


def test_size_cap():
    u = HistoryUniverse(4)
    n = random_counts(np.random.default_rng(0), 4, 30)
    with pytest.raises(FibreSizeError):
        enumerate_fibre(n, u, size_cap=50)


def test_t2_posterior_and_likelihood(uni2):
    th = CaptureParams.constant(2, 0.8, 0.5)
    f = enumerate_fibre([1, 1], uni2)
    post = exact_conditional_posterior(f, th, 0.5)
    assert np.allclose(post, [0.5, 0.5]) and (post > 0).all()
    assert math.isclose(exact_observed_likelihood([1, 1], th, 0.5, f), 0.48)
    assert math.isclose(exact_observed_likelihood([1, 1], th, ErrorParam(0.5)), 0.48)


def test_alpha_extremes(uni2):
    th = CaptureParams.constant(2, 0.8, 0.5)
    f = enumerate_fibre([2, 2], uni2)
    x0 = f.position(zero_error_config([2, 2], uni2, sparse=True))
    post = exact_conditional_posterior(f, th, 1.0)
    assert post[x0] == 1.0
    # alpha = 0: every resighting is a misread, so mass sits on the maximal-error elements
    post0 = exact_conditional_posterior(f, th, 0.0)
    s = ConstraintSystem(uni2)
    errs = np.array([total_errors(x, s).sum() for x in f.elements])
    assert post0[errs == errs.max()].sum() == pytest.approx(1.0)


def test_connectivity_examples(uni2):
    f = enumerate_fibre([1, 1], uni2)
    assert check_connectivity(f) == (True, None)
    single = enumerate_fibre([3, 0], uni2)
    assert len(single) == 1 and check_connectivity(single)[0]


def test_reduction_examples(uni2):
    draws, states = reduction_path_to_zero({0: 1, 1: 1}, uni2)
    assert draws == [] and states == [{0: 1, 1: 1}]
    draws, states = reduction_path_to_zero(np.array([0, 0, 1, 1]), uni2)
    assert len(draws) == 1 and states[-1] == {0: 1, 1: 1}


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_connectivity_and_reduction_random(T, individuals, seed):
    rng = np.random.default_rng(seed)
    u = HistoryUniverse(T)
    n = random_counts(rng, T, individuals, max_distinct=4)
    try:
        f = enumerate_fibre(n, u, size_cap=3000)
    except FibreSizeError:
        return
    s = ConstraintSystem(u)
    n_ext = extend_counts(n, s)
    ok, witness = check_connectivity(f)
    assert ok, witness
    x0 = zero_error_config(n, u, sparse=True)
    zero_error = [x for x in f.elements if not total_errors(x, s).any()]
    assert zero_error == [x0]
    for x in f.elements:
        draws, states = reduction_path_to_zero(x, u)
        assert len(draws) == total_errors(x, s).sum()
        assert states[-1] == x0
        assert all(in_fibre(y, n_ext, s) for y in states)
