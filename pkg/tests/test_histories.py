from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bremark.histories import (
    HistoryUniverse,
    StudyShape,
    capture_of,
    decode,
    encode,
    enumerate_universe,
    is_valid_binary,
    is_valid_latent,
    latent_code_at,
    latent_index,
    observed_of,
    parse_history,
)


def brute_latent(T):
    out = []
    for ev in product(range(4), repeat=T):
        nz = [i for i, e in enumerate(ev) if e]
        if nz and ev[nz[0]] == 1 and nz[0] < T - 1:
            out.append(ev)
    return out


def brute_binary(T):
    return [ev for ev in product(range(2), repeat=T) if any(ev) and ev.index(1) < T - 1]


def test_t2_alphabets():
    u = enumerate_universe(StudyShape(2))
    assert u.observed == [(1, 0), (1, 1)]
    assert u.latent_error == [(1, 0), (1, 1), (1, 2), (1, 3)]
    assert (u.I, u.J, u.K) == (2, 4, 2)


def test_t4_sizes():
    u = HistoryUniverse(4)
    assert (u.I, u.J, u.K) == (14, 84, 14)


@pytest.mark.parametrize("T", range(2, 7))
def test_enumeration_matches_brute_force(T):
    u = enumerate_universe(T)
    # canonical order is ascending numeral value, which is lexicographic order of the strings
    assert u.latent_error == sorted(brute_latent(T))
    assert u.observed == sorted(brute_binary(T))
    assert u.latent_capture == u.observed
    assert len(u.latent_error) == sum(4 ** (T - s) for s in range(1, T))


@pytest.mark.parametrize("bad", [1, 0, -3, 17])
def test_shape_rejects(bad):
    with pytest.raises(ValueError):
        StudyShape(bad)


def test_shape_rejects_non_integer():
    with pytest.raises(TypeError):
        StudyShape(2.5)


@pytest.mark.parametrize("nu,omega,xi", [
    ("13", "11", "10"),
    ("12", "10", "11"),
    ("10", "10", "10"),
    ("1030", "1010", "1000"),
])
def test_collapse_maps(nu, omega, xi):
    nu = parse_history(nu)
    assert observed_of(nu) == parse_history(omega)
    assert capture_of(nu) == parse_history(xi)


@pytest.mark.parametrize("text,valid", [("0130", True), ("0200", False), ("0001", False),
                                        ("1000", True), ("0000", False), ("3100", False)])
def test_is_valid_latent(text, valid):
    assert is_valid_latent(parse_history(text)) is valid


def test_is_valid_binary():
    assert is_valid_binary((1, 0))
    assert not is_valid_binary((0, 1))
    assert not is_valid_binary((0, 0))


@pytest.mark.parametrize("T", [2, 3, 5])
def test_index_round_trip(T):
    u = HistoryUniverse(T)
    for j in range(u.J):
        assert u.index_of_latent(u.latent_at(j)) == j
        assert latent_index(latent_code_at(j, T), T) == j
    for i in range(u.I):
        assert u.index_of_observed(u.observed_at(i)) == i


def test_index_of_rejects_invalid():
    u = HistoryUniverse(3)
    with pytest.raises(ValueError):
        u.index_of_latent((0, 2, 0))
    with pytest.raises(ValueError):
        u.index_of_observed((0, 0, 1))
    with pytest.raises(IndexError):
        u.latent_at(u.J)


@given(st.integers(2, 8), st.data())
def test_maps_land_in_valid_alphabets(T, data):
    u = HistoryUniverse(T)
    j = data.draw(st.integers(0, u.J - 1))
    nu = u.latent_at(j)
    om, xi = observed_of(nu), capture_of(nu)
    assert is_valid_binary(om) and is_valid_binary(xi)
    for a, b, c in zip(nu, om, xi):
        if a in (0, 1):
            assert a == b == c
    # marking occasion preserved by both maps
    assert om.index(1) == xi.index(1) == nu.index(1)


@given(st.integers(2, 10), st.data())
def test_encode_decode(T, data):
    ev = tuple(data.draw(st.lists(st.integers(0, 3), min_size=T, max_size=T)))
    assert decode(encode(ev, 4), T, 4) == ev


def test_latent_events_matrix():
    u = HistoryUniverse(3)
    assert np.array_equal(u.latent_events, np.array(u.latent_error))
    assert np.all(np.diff(u.latent_codes) > 0)
