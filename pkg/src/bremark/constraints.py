"""Linear constraints n = A x and z = B x between the count vectors.

``A`` stacks ``A1`` (latent error history -> observed history) on top of
``A2`` (one row per occasion 2..T counting false positives minus false
negatives).  The observed counts are extended with ``T - 1`` zeros to match.
Both matrices are held column-wise: each latent history stores the index of
its observed history, the index of its capture history and its error
occasions.  Dense matrices are only built on request.

Count vectors are accepted either dense (numpy integer arrays indexed by the
canonical order) or sparse (``{index: count}`` mappings).  All arithmetic is
exact integer arithmetic.
"""

from __future__ import annotations

from collections.abc import Mapping
from functools import cached_property

import numpy as np

from .histories import (
    FALSE_NEGATIVE,
    FALSE_POSITIVE,
    HistoryUniverse,
    binary_index,
    capture_code,
    embed_binary,
    error_occasions,
    latent_code_at,
    latent_index,
    observed_code,
)

DENSE_LIMIT = 2_000_000  # max matrix cells materialised by the dense accessors


class FibreError(ValueError):
    """Raised when counts are inconsistent with the constraint system."""


class ConstraintSystem:
    """Column-wise storage of ``A = [A1; A2]`` and ``B`` for one universe."""

    def __init__(self, universe: HistoryUniverse):
        self.universe = universe
        self.T = universe.T
        self.I, self.J, self.K = universe.I, universe.J, universe.K

    @cached_property
    def observed_index(self) -> np.ndarray:
        """Row of A1 holding the single 1 of each column."""
        return self._binary_image(odd=True)

    @cached_property
    def capture_index(self) -> np.ndarray:
        """Row of B holding the single 1 of each column."""
        return self._binary_image(odd=False)

    def _binary_image(self, odd: bool) -> np.ndarray:
        ev = self.universe.latent_events
        bits = (ev % 2 == 1) if odd else ((ev == 1) | (ev == 2))
        weights = 1 << np.arange(self.T - 1, -1, -1, dtype=np.int64)
        return (bits.astype(np.int64) @ weights) - 2

    @cached_property
    def error_sign(self) -> np.ndarray:
        """``J x (T-1)`` matrix equal to ``A2`` transposed (int8)."""
        ev = self.universe.latent_events[:, 1:]
        out = np.zeros(ev.shape, dtype=np.int8)
        out[ev == FALSE_NEGATIVE] = -1
        out[ev == FALSE_POSITIVE] = 1
        return out

    # dense views (tests, small T) ------------------------------------------
    def _check_dense(self, rows):
        if rows * self.J > DENSE_LIMIT:
            raise MemoryError(f"dense matrix with {rows}x{self.J} cells requested")

    @property
    def A1(self) -> np.ndarray:
        self._check_dense(self.I)
        out = np.zeros((self.I, self.J), dtype=np.int64)
        out[self.observed_index, np.arange(self.J)] = 1
        return out

    @property
    def A2(self) -> np.ndarray:
        self._check_dense(self.T - 1)
        return self.error_sign.T.astype(np.int64)

    @property
    def A(self) -> np.ndarray:
        return np.vstack([self.A1, self.A2])

    @property
    def B(self) -> np.ndarray:
        self._check_dense(self.K)
        out = np.zeros((self.K, self.J), dtype=np.int64)
        out[self.capture_index, np.arange(self.J)] = 1
        return out

    # sparse per-column lookups, no materialisation -------------------------
    def column(self, j: int) -> tuple[int, int, list[int], list[int]]:
        """(observed row, capture row, event-2 occasions, event-3 occasions) of column j."""
        code = latent_code_at(j, self.T)
        twos, threes = error_occasions(code, self.T)
        return (
            binary_index(observed_code(code, self.T)),
            binary_index(capture_code(code, self.T)),
            twos,
            threes,
        )


def build_constraints(universe: HistoryUniverse) -> ConstraintSystem:
    return ConstraintSystem(universe)


def _items(x, J):
    """(index, count) pairs with positive count, from dense or sparse input."""
    if isinstance(x, Mapping):
        for j, c in x.items():
            if not 0 <= j < J:
                raise IndexError(f"latent index {j} out of range")
            if c:
                yield int(j), int(c)
    else:
        x = np.asarray(x)
        if x.shape != (J,):
            raise ValueError(f"expected a latent count vector of length {J}, got {x.shape}")
        for j in np.flatnonzero(x):
            yield int(j), int(x[j])


def extend_counts(n, sys: ConstraintSystem) -> np.ndarray:
    """Observed counts followed by ``T - 1`` zeros."""
    n = np.asarray(n, dtype=np.int64)
    if n.shape != (sys.I,):
        raise ValueError(f"observed counts must have length {sys.I}, got {n.shape}")
    return np.concatenate([n, np.zeros(sys.T - 1, dtype=np.int64)])


def apply_A(x, sys: ConstraintSystem) -> np.ndarray:
    """Exact ``A @ x`` (length ``I + T - 1``)."""
    out = np.zeros(sys.I + sys.T - 1, dtype=np.int64)
    if isinstance(x, Mapping):
        for j, c in _items(x, sys.J):
            row, _, twos, threes = sys.column(j)
            out[row] += c
            for t in twos:
                out[sys.I + t - 2] -= c
            for t in threes:
                out[sys.I + t - 2] += c
        return out
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (sys.J,):
        raise ValueError(f"expected a latent count vector of length {sys.J}, got {x.shape}")
    np.add.at(out, sys.observed_index, x)
    out[sys.I:] = x @ sys.error_sign.astype(np.int64)
    return out


def apply_B(x, sys: ConstraintSystem) -> np.ndarray:
    """Exact ``B @ x``: counts of true capture histories."""
    z = np.zeros(sys.K, dtype=np.int64)
    if isinstance(x, Mapping):
        for j, c in _items(x, sys.J):
            if c < 0:
                raise ValueError("negative latent count")
            z[sys.column(j)[1]] += c
        return z
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (sys.J,):
        raise ValueError(f"expected a latent count vector of length {sys.J}, got {x.shape}")
    if (x < 0).any():
        raise ValueError("negative latent count")
    np.add.at(z, sys.capture_index, x)
    return z


def in_fibre(x, n_ext, sys: ConstraintSystem) -> bool:
    """True iff ``x >= 0`` and ``A x = n_ext`` exactly."""
    n_ext = np.asarray(n_ext, dtype=np.int64)
    if isinstance(x, Mapping):
        if any(c < 0 for c in x.values()):
            return False
    elif (np.asarray(x) < 0).any():
        return False
    return bool(np.array_equal(apply_A(x, sys), n_ext))


def zero_error_config(n, universe: HistoryUniverse, sparse: bool = False):
    """The unique fibre element without errors: each observed count sits on
    its own history embedded in the latent alphabet."""
    T = universe.T
    n = np.asarray(n, dtype=np.int64)
    if n.shape != (universe.I,):
        raise ValueError(f"observed counts must have length {universe.I}, got {n.shape}")
    if (n < 0).any():
        raise FibreError("observed counts must be nonnegative")
    cfg = {}
    for i in np.flatnonzero(n):
        cfg[latent_index(embed_binary(int(i) + 2, T), T)] = int(n[i])
    if sparse:
        return cfg
    x = np.zeros(universe.J, dtype=np.int64)
    for j, c in cfg.items():
        x[j] = c
    return x


def total_errors(x, sys: ConstraintSystem) -> np.ndarray:
    """Per-occasion false-negative counts ``e_t`` for t = 2..T."""
    out = np.zeros(sys.T - 1, dtype=np.int64)
    for j, c in _items(x, sys.J):
        for t in sys.column(j)[2]:
            out[t - 2] += c
    return out
