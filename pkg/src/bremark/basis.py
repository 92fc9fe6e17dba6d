"""Primitive error moves and the dynamic Markov basis.

A move ``b(nu0, nu1, nu2, nu3)`` at occasion ``t`` takes one individual with
history ``nu0`` (not seen at t) and one with ``nu1`` (correctly seen at t) and
turns them into ``nu2 = nu0 + 2 delta_t`` (a misread: truly seen, recorded as
someone else) and ``nu3 = nu1 + 2 delta_t`` (recorded at t without being
there).  ``x + b`` adds one error at ``t``; ``x - b`` removes one.  Both keep
``A x`` fixed.

The dynamic basis ``M(x)`` is never built during sampling: add moves are drawn
by picking ``nu0``, then an occasion, then ``nu1``; remove moves by picking
``nu2``, an occasion, then ``nu3``.  Each pick is uniform over *distinct*
histories with positive count, so the proposal probability is the inverse
product of the three set sizes.

Latent configurations are handled as sparse ``{index: count}`` dicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .histories import (
    FALSE_NEGATIVE,
    FALSE_POSITIVE,
    NOT_SEEN,
    SEEN,
    HistoryUniverse,
    latent_code_at,
    latent_event,
    latent_index,
    latent_marking,
    occasion_unit,
    encode,
)

NEG_INF = -math.inf


class MoveError(ValueError):
    pass


@dataclass(frozen=True)
class Move:
    """Two -1 entries (``nu0``, ``nu1``) and two +1 entries (``nu2``, ``nu3``)
    at latent indices; ``codes`` holds the matching latent codes."""

    t: int
    nu0: int
    nu1: int
    nu2: int
    nu3: int
    codes: tuple[int, int, int, int]

    def vector(self, J: int) -> np.ndarray:
        b = np.zeros(J, dtype=np.int64)
        b[[self.nu0, self.nu1]] = -1
        b[[self.nu2, self.nu3]] = 1
        return b

    def apply(self, x: dict, c: int) -> dict:
        """``x + c b`` as a new sparse dict (entries may go negative)."""
        out = dict(x)
        for j, sign in ((self.nu0, -1), (self.nu1, -1), (self.nu2, 1), (self.nu3, 1)):
            v = out.get(j, 0) + c * sign
            if v:
                out[j] = v
            else:
                out.pop(j, None)
        return out


@dataclass(frozen=True)
class MoveDraw:
    move: Move
    direction: int  # +1 adds an error, -1 removes one
    forward_logq: float


def _code(nu, universe: HistoryUniverse) -> int:
    if isinstance(nu, (int, np.integer)):
        return latent_code_at(int(nu), universe.T)
    universe.index_of_latent(nu)  # validates
    return encode(tuple(nu), 4)


def make_move(nu0, nu1, t: int, universe: HistoryUniverse) -> Move:
    """Build the move adding an error at occasion ``t``.

    ``nu0``/``nu1`` are latent indices or event tuples.
    """
    T = universe.T
    if not 2 <= t <= T:
        raise MoveError(f"occasion {t} outside 2..{T}")
    c0, c1 = _code(nu0, universe), _code(nu1, universe)
    if latent_event(c0, T, t) != NOT_SEEN or t <= latent_marking(c0, T):
        raise MoveError("nu0 must be marked before t and unseen at t")
    if latent_event(c1, T, t) != SEEN or t <= latent_marking(c1, T):
        raise MoveError("nu1 must be marked before t and correctly seen at t")
    unit = 2 * occasion_unit(T, t)
    c2, c3 = c0 + unit, c1 + unit
    idx = [latent_index(c, T) for c in (c0, c1, c2, c3)]
    if len(set(idx)) != 4:  # pragma: no cover - excluded by the event pattern
        raise MoveError("degenerate move")
    return Move(t, *idx, codes=(c0, c1, c2, c3))


def _move_from_codes(c0: int, c1: int, t: int, T: int) -> Move:
    unit = 2 * occasion_unit(T, t)
    c2, c3 = c0 + unit, c1 + unit
    return Move(t, *(latent_index(c, T) for c in (c0, c1, c2, c3)), codes=(c0, c1, c2, c3))


# ---------------------------------------------------------------------------
# the sets X_vt(x), restricted to occasions after marking


class _Support:
    """Positive entries of ``x`` with decoded events, in ascending index order."""

    def __init__(self, x: dict, universe: HistoryUniverse):
        T = self.T = universe.T
        self.entries = []
        for j in sorted(x):
            if x[j] > 0:
                code = latent_code_at(j, T)
                mark = latent_marking(code, T)
                events = [latent_event(code, T, t) for t in range(1, T + 1)]
                self.entries.append((j, code, mark, events))

    def add_occasions(self, entry) -> list[int]:
        _, _, mark, events = entry
        return [t for t in range(mark + 1, self.T + 1) if events[t - 1] == NOT_SEEN]

    def remove_occasions(self, entry) -> list[int]:
        return [t for t in range(2, self.T + 1) if entry[3][t - 1] == FALSE_NEGATIVE]

    def with_event(self, v: int, t: int) -> list:
        return [e for e in self.entries if e[3][t - 1] == v and t > e[2]]

    def add_starts(self) -> list:
        return [e for e in self.entries if self.add_occasions(e)]

    def remove_starts(self) -> list:
        return [e for e in self.entries if self.remove_occasions(e)]


def _sparse(x) -> dict:
    if isinstance(x, dict):
        return x
    x = np.asarray(x)
    return {int(j): int(x[j]) for j in np.flatnonzero(x)}


def sample_add_move(x, universe: HistoryUniverse, rng: np.random.Generator) -> MoveDraw | None:
    """Draw a move from ``M1(x)``; ``None`` when one of the three sets is empty."""
    sup = _Support(_sparse(x), universe)
    starts = sup.add_starts()
    if not starts:
        return None
    e0 = starts[rng.integers(len(starts))]
    occasions = sup.add_occasions(e0)
    s = occasions[rng.integers(len(occasions))]
    partners = sup.with_event(SEEN, s)
    if not partners:
        return None
    e1 = partners[rng.integers(len(partners))]
    move = _move_from_codes(e0[1], e1[1], s, universe.T)
    logq = -math.log(len(starts)) - math.log(len(occasions)) - math.log(len(partners))
    return MoveDraw(move, +1, logq)


def sample_remove_move(x, universe: HistoryUniverse, rng: np.random.Generator) -> MoveDraw | None:
    """Draw a move from ``M2(x)``; ``None`` when ``x`` carries no errors."""
    sup = _Support(_sparse(x), universe)
    starts = sup.remove_starts()
    if not starts:
        return None
    e2 = starts[rng.integers(len(starts))]
    occasions = sup.remove_occasions(e2)
    s = occasions[rng.integers(len(occasions))]
    partners = sup.with_event(FALSE_POSITIVE, s)
    if not partners:
        return None
    e3 = partners[rng.integers(len(partners))]
    unit = 2 * occasion_unit(universe.T, s)
    move = _move_from_codes(e2[1] - unit, e3[1] - unit, s, universe.T)
    logq = -math.log(len(starts)) - math.log(len(occasions)) - math.log(len(partners))
    return MoveDraw(move, -1, logq)


def draw_logq(x, move: Move, direction: int, universe: HistoryUniverse) -> float:
    """Log probability that the three-step sampler in ``direction`` draws ``move`` at ``x``.

    The 1/2 for choosing the direction is left out on both sides.
    """
    sup = _Support(_sparse(x), universe)
    t = move.t
    if direction > 0:
        first, partner_event, partner = move.nu0, SEEN, move.nu1
        starts = sup.add_starts()
        occ_of = sup.add_occasions
    else:
        first, partner_event, partner = move.nu2, FALSE_POSITIVE, move.nu3
        starts = sup.remove_starts()
        occ_of = sup.remove_occasions
    entry = next((e for e in starts if e[0] == first), None)
    if entry is None:
        return NEG_INF
    occasions = occ_of(entry)
    partners = sup.with_event(partner_event, t)
    if t not in occasions or all(e[0] != partner for e in partners):
        return NEG_INF
    return -math.log(len(starts)) - math.log(len(occasions)) - math.log(len(partners))


def reverse_logq(x_prop, draw: MoveDraw, universe: HistoryUniverse) -> float:
    """Log probability of proposing the way back from ``x_prop``."""
    return draw_logq(x_prop, draw.move, -draw.direction, universe)


def enumerate_M1(x, universe: HistoryUniverse) -> list[Move]:
    sup = _Support(_sparse(x), universe)
    moves = []
    for t in range(2, universe.T + 1):
        for e0 in sup.with_event(NOT_SEEN, t):
            for e1 in sup.with_event(SEEN, t):
                moves.append(_move_from_codes(e0[1], e1[1], t, universe.T))
    return moves


def enumerate_M2(x, universe: HistoryUniverse) -> list[Move]:
    sup = _Support(_sparse(x), universe)
    moves = []
    T = universe.T
    for t in range(2, T + 1):
        unit = 2 * occasion_unit(T, t)
        for e2 in sup.with_event(FALSE_NEGATIVE, t):
            for e3 in sup.with_event(FALSE_POSITIVE, t):
                moves.append(_move_from_codes(e2[1] - unit, e3[1] - unit, t, T))
    return moves


# ---------------------------------------------------------------------------
# static basis


def full_basis_size(T: int) -> int:
    """Number of add/remove-error moves for ``T`` occasions (closed form).

    With occasion ``t`` fixed, histories marked at ``s < t`` with a given event
    at ``t`` number ``4**(T - s - 1)``; a move pairs an event-0 history with an
    event-1 history.
    """
    total = 0
    for t in range(2, T + 1):
        per_event = sum(4 ** (T - s - 1) for s in range(1, t))
        total += per_event * per_event
    return total


def static_full_basis(universe: HistoryUniverse, cap_T: int = 4) -> list[Move]:
    """Every move that adds or removes one error, for small ``T``."""
    T = universe.T
    if T > cap_T:
        raise MoveError(
            f"the full error-move basis has {full_basis_size(T):,} elements at T={T}; "
            f"refusing to build it above T={cap_T}"
        )
    codes = universe.latent_codes
    events = universe.latent_events
    marks = np.array([latent_marking(int(c), T) for c in codes])
    moves = []
    for t in range(2, T + 1):
        after = marks < t
        zeros = codes[after & (events[:, t - 1] == NOT_SEEN)]
        ones = codes[after & (events[:, t - 1] == SEEN)]
        for c0 in zeros:
            for c1 in ones:
                moves.append(_move_from_codes(int(c0), int(c1), t, T))
    return moves
