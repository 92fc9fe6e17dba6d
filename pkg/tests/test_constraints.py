import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bremark.constraints import (
    ConstraintSystem,
    apply_A,
    apply_B,
    build_constraints,
    extend_counts,
    in_fibre,
    total_errors,
    zero_error_config,
)
from bremark.histories import HistoryUniverse, capture_of, observed_of


def test_t2_matrices(sys2):
    assert sys2.A1.tolist() == [[1, 0, 1, 0], [0, 1, 0, 1]]
    assert sys2.A2.tolist() == [[0, 0, -1, 1]]
    assert sys2.B.tolist() == [[1, 0, 0, 1], [0, 1, 1, 0]]
    assert sys2.A.shape == (3, 4)


@pytest.mark.parametrize("T", [2, 3, 4])
def test_dense_matrices_follow_collapse_maps(T):
    u = HistoryUniverse(T)
    s = build_constraints(u)
    A1, A2, B = s.A1, s.A2, s.B
    for j, nu in enumerate(u.latent_error):
        assert A1[:, j].sum() == 1 and A1[u.index_of_observed(observed_of(nu)), j] == 1
        assert B[:, j].sum() == 1 and B[u.index_of_capture(capture_of(nu)), j] == 1
        for t in range(2, T + 1):
            expect = -1 if nu[t - 1] == 2 else (1 if nu[t - 1] == 3 else 0)
            assert A2[t - 2, j] == expect


def test_extend_counts(sys2):
    assert extend_counts([1, 1], sys2).tolist() == [1, 1, 0]
    s3 = ConstraintSystem(HistoryUniverse(3))
    assert extend_counts(np.zeros(6, int), s3).tolist() == [0] * 8
    s4 = ConstraintSystem(HistoryUniverse(4))
    assert len(extend_counts(np.zeros(14, int), s4)) == 17
    with pytest.raises(ValueError):
        extend_counts([1, 1, 1], sys2)


@pytest.mark.parametrize("x,expected", [([1, 1, 0, 0], True), ([0, 0, 1, 1], True),
                                        ([0, 0, 1, 0], False), ([2, 0, 0, 0], False),
                                        ([2, 1, -1, 0], False)])
def test_in_fibre_t2(sys2, x, expected):
    assert in_fibre(np.array(x), [1, 1, 0], sys2) is expected


def test_zero_error_config(uni2, sys2):
    assert zero_error_config([1, 1], uni2).tolist() == [1, 1, 0, 0]
    u3 = HistoryUniverse(3)
    n = np.zeros(u3.I, int)
    n[u3.index_of_observed((1, 0, 1))] = 2
    x = zero_error_config(n, u3)
    assert x[u3.index_of_latent((1, 0, 1))] == 2 and x.sum() == 2
    assert not zero_error_config(np.zeros(u3.I, int), u3).any()


def test_apply_B_examples(sys2):
    assert apply_B(np.array([0, 0, 1, 1]), sys2).tolist() == [1, 1]
    assert apply_B(np.array([1, 1, 0, 0]), sys2).tolist() == [1, 1]
    assert apply_B(np.zeros(4, int), sys2).tolist() == [0, 0]
    with pytest.raises(ValueError):
        apply_B(np.array([-1, 0, 0, 0]), sys2)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.data())
def test_sparse_and_dense_agree(T, data):
    u = HistoryUniverse(T)
    s = ConstraintSystem(u)
    x = np.array(data.draw(st.lists(st.integers(0, 3), min_size=u.J, max_size=u.J)))
    sparse = {j: int(c) for j, c in enumerate(x) if c}
    assert np.array_equal(apply_A(x, s), s.A @ x)
    assert np.array_equal(apply_A(sparse, s), s.A @ x)
    assert np.array_equal(apply_B(x, s), s.B @ x)
    assert np.array_equal(apply_B(sparse, s), s.B @ x)
    # totals are conserved by both maps
    assert (s.A1 @ x).sum() == x.sum() == apply_B(x, s).sum()
    twos = (u.latent_events[:, 1:] == 2).astype(int)
    assert np.array_equal(total_errors(x, s), x @ twos)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.data())
def test_zero_error_config_in_fibre(T, data):
    u = HistoryUniverse(T)
    n = np.array(data.draw(st.lists(st.integers(0, 4), min_size=u.I, max_size=u.I)))
    s = ConstraintSystem(u)
    x0 = zero_error_config(n, u, sparse=True)
    assert in_fibre(x0, extend_counts(n, s), s)
    assert not total_errors(x0, s).any()
    assert np.array_equal(apply_B(x0, s), n)


def test_dense_guard():
    s = ConstraintSystem(HistoryUniverse(12))
    with pytest.raises(MemoryError):
        s.A1
