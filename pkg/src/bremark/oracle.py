"""Exact answers for small studies by enumerating the fibre.

Every individual recorded with observed history ``omega`` (released at ``s``)
truly carries one of the ``2**(T - s)`` latent histories that agree with
``omega`` after reading events 1/3 as "recorded" and 0/2 as "not recorded".
The fibre is therefore the set of ways to split each observed count over
its preimages such that false negatives and false positives balance at every
occasion.  The search walks the observed histories one at a time and prunes
partial splits whose imbalance can no longer be repaired by the rest.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import basis as mb
from .constraints import ConstraintSystem, FibreError, apply_B, extend_counts, total_errors, zero_error_config
from .histories import (
    HistoryUniverse,
    binary_code_at,
    decode,
    encode,
    first_event,
    latent_index,
)
from .model import CaptureParams, ErrorParam, log_joint, logsumexp

NEG_INF = -math.inf
DEFAULT_SIZE_CAP = 100_000


class FibreSizeError(RuntimeError):
    """The fibre has more elements than the enumeration cap allows."""


def _key(x: dict) -> tuple:
    return tuple(sorted((j, c) for j, c in x.items() if c))


@dataclass
class Fibre:
    n_ext: np.ndarray
    universe: HistoryUniverse
    elements: list = field(default_factory=list)  # sparse {index: count} dicts
    index: dict = field(default_factory=dict)  # key -> position

    def __len__(self):
        return len(self.elements)

    def position(self, x) -> int:
        if not isinstance(x, dict):
            x = {int(j): int(np.asarray(x)[j]) for j in np.flatnonzero(x)}
        return self.index[_key(x)]

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.elements), self.universe.J), dtype=np.int64)
        for r, x in enumerate(self.elements):
            for j, c in x.items():
                out[r, j] = c
        return out


def _preimages(omega: tuple, T: int):
    """Latent codes and per-occasion (twos - threes) vectors mapping onto ``omega``."""
    s = first_event(omega)
    free = range(s + 1, T)
    out = []
    for flips in product((0, 1), repeat=len(free)):
        events = list(omega)
        bal = np.zeros(T - 1, dtype=np.int64)
        for pos, f in zip(free, flips):
            if f:
                events[pos] += 2  # 0 -> 2 (missed as self) or 1 -> 3 (someone else's record)
                bal[pos - 1] += 1 if events[pos] == 2 else -1
        out.append((encode(events, 4), bal))
    return out


def _compositions(n: int, k: int):
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def enumerate_fibre(n, universe: HistoryUniverse, sys: ConstraintSystem | None = None,
                    size_cap: int = DEFAULT_SIZE_CAP) -> Fibre:
    """All ``x >= 0`` with ``A x = (n, 0)``; raises :class:`FibreSizeError` past ``size_cap``."""
    T = universe.T
    sys = sys or ConstraintSystem(universe)
    n = np.asarray(n, dtype=np.int64)
    n_ext = extend_counts(n, sys)
    if (n < 0).any():
        raise FibreError("observed counts must be nonnegative")
    groups = []
    for i in np.flatnonzero(n):
        omega = decode(binary_code_at(int(i)), T, 2)
        pre = _preimages(omega, T)
        can2 = np.array([int(omega[pos] == 0) for pos in range(1, T)]) * (np.arange(2, T + 1) > first_event(omega) + 1)
        can3 = np.array([int(omega[pos] == 1) for pos in range(1, T)]) * (np.arange(2, T + 1) > first_event(omega) + 1)
        groups.append((int(n[i]), pre, can2 * int(n[i]), can3 * int(n[i])))
    # remaining capacity of groups g.. to add false negatives / positives per occasion
    rem2 = np.zeros((len(groups) + 1, T - 1), dtype=np.int64)
    rem3 = np.zeros((len(groups) + 1, T - 1), dtype=np.int64)
    for g in range(len(groups) - 1, -1, -1):
        rem2[g] = rem2[g + 1] + groups[g][2]
        rem3[g] = rem3[g + 1] + groups[g][3]

    fibre = Fibre(n_ext=n_ext, universe=universe)
    chosen: dict = {}

    def visit(g: int, bal: np.ndarray):
        if g == len(groups):
            if not bal.any():
                if len(fibre.elements) >= size_cap:
                    raise FibreSizeError(f"fibre exceeds the size cap of {size_cap}")
                x = {latent_index(c, T): k for c, k in chosen.items() if k}
                fibre.index[_key(x)] = len(fibre.elements)
                fibre.elements.append(x)
            return
        count, pre, _, _ = groups[g]
        for comp in _compositions(count, len(pre)):
            new = bal.copy()
            for k, (_, delta) in zip(comp, pre):
                if k:
                    new += k * delta
            if np.any(new > rem3[g + 1]) or np.any(new < -rem2[g + 1]):
                continue
            for k, (code, _) in zip(comp, pre):
                chosen[code] = k
            visit(g + 1, new)
            for code, _ in pre:
                chosen.pop(code, None)

    visit(0, np.zeros(T - 1, dtype=np.int64))
    return fibre


def fibre_log_joints(fibre: Fibre, theta1: CaptureParams, theta2: ErrorParam | float,
                     sys: ConstraintSystem | None = None) -> np.ndarray:
    sys = sys or ConstraintSystem(fibre.universe)
    return np.array([
        log_joint(x, apply_B(x, sys), theta1, theta2, fibre.n_ext, sys) for x in fibre.elements
    ])


def exact_conditional_posterior(fibre: Fibre, theta1: CaptureParams, theta2: ErrorParam | float,
                                sys: ConstraintSystem | None = None) -> np.ndarray:
    """``pi(x | n, theta)`` for every fibre element, in fibre order."""
    lj = fibre_log_joints(fibre, theta1, theta2, sys)
    total = logsumexp(lj)
    if total == NEG_INF:
        raise FibreError("every fibre element has zero probability under these parameters")
    return np.exp(lj - total)


def exact_observed_likelihood(n, theta1: CaptureParams, theta2: ErrorParam | float,
                              fibre: Fibre | None = None, universe: HistoryUniverse | None = None,
                              log: bool = False) -> float:
    """``pi(n | theta)``: the complete-data density summed over the fibre."""
    if fibre is None:
        universe = universe or HistoryUniverse(theta1.T)
        fibre = enumerate_fibre(n, universe)
    total = logsumexp(fibre_log_joints(fibre, theta1, theta2))
    return total if log else math.exp(total)


def neighbours(x: dict, universe: HistoryUniverse) -> list[dict]:
    """Configurations one dynamic move away from ``x``."""
    out = [m.apply(x, 1) for m in mb.enumerate_M1(x, universe)]
    out += [m.apply(x, -1) for m in mb.enumerate_M2(x, universe)]
    return out


def check_connectivity(fibre: Fibre, universe: HistoryUniverse | None = None):
    """``(connected, witness)``: BFS over dynamic moves from the first element.

    ``witness`` is ``None`` when connected, otherwise the positions reached
    from element 0 (a component that misses part of the fibre).
    """
    universe = universe or fibre.universe
    if len(fibre) <= 1:
        return True, None
    seen = {0}
    queue = deque([0])
    while queue:
        r = queue.popleft()
        for y in neighbours(fibre.elements[r], universe):
            pos = fibre.index.get(_key(y))
            if pos is None:
                raise AssertionError("a dynamic move left the fibre")
            if pos not in seen:
                seen.add(pos)
                queue.append(pos)
    if len(seen) == len(fibre):
        return True, None
    return False, sorted(seen)


def reduction_path_to_zero(x, universe: HistoryUniverse, sys: ConstraintSystem | None = None):
    """Remove errors one at a time until the zero-error configuration.

    Returns ``(draws, states)``: the remove draws applied and the
    configurations visited, starting with ``x``.
    """
    sys = sys or ConstraintSystem(universe)
    if not isinstance(x, dict):
        x = {int(j): int(np.asarray(x)[j]) for j in np.flatnonzero(x)}
    x = {j: c for j, c in x.items() if c}
    draws, states = [], [x]
    while True:
        moves = mb.enumerate_M2(x, universe)
        if not moves:
            break
        move = moves[0]
        logq = mb.draw_logq(x, move, -1, universe)
        draws.append(mb.MoveDraw(move, -1, logq))
        x = move.apply(x, -1)
        states.append(x)
    if total_errors(x, sys).any():  # pragma: no cover - ruled out by the balance rows
        raise AssertionError("errors left but no remove move available")
    return draws, states


def zero_error_element(fibre: Fibre) -> dict:
    n = fibre.n_ext[: fibre.universe.I]
    return zero_error_config(n, fibre.universe, sparse=True)
