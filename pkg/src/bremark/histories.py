"""History alphabets for the CJS/band-read-error model.

Three alphabets are involved:

* observed histories (omega): binary strings of length T, what was recorded;
* latent error histories (nu): strings over {0, 1, 2, 3}, what happened to
  each marked individual including misreads;
* latent capture histories (xi): binary strings, the true capture pattern.

Every history is identified by an integer *code*: the value of its event
string read as a base-4 (nu) or base-2 (omega, xi) numeral, occasion 1 being
the most significant digit.  Canonical indices are the ranks of the valid
codes in ascending order, and have closed forms, so the alphabets never need
to be materialised for index arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

MAX_OCCASIONS = 16

NOT_SEEN = 0
SEEN = 1
FALSE_NEGATIVE = 2
FALSE_POSITIVE = 3

History = tuple  # tuple[int, ...] of events, occasion 1 first


@dataclass(frozen=True)
class StudyShape:
    """Number of capture occasions of a study."""

    T: int

    def __post_init__(self):
        if not isinstance(self.T, (int, np.integer)) or isinstance(self.T, bool):
            raise TypeError(f"T must be an integer, got {self.T!r}")
        if self.T < 2:
            raise ValueError(f"need at least 2 occasions, got T={self.T}")
        if self.T > MAX_OCCASIONS:
            raise ValueError(f"T={self.T} exceeds the engine cap of {MAX_OCCASIONS}")

    @property
    def I(self) -> int:
        return 2**self.T - 2

    @property
    def J(self) -> int:
        return (4**self.T - 1) // 3 - 1

    @property
    def K(self) -> int:
        return 2**self.T - 2


# ---------------------------------------------------------------------------
# event-level helpers


def parse_history(text: str) -> History:
    """``"1030"`` -> ``(1, 0, 3, 0)``."""
    events = tuple(int(ch) for ch in text.strip())
    if any(e not in (0, 1, 2, 3) for e in events):
        raise ValueError(f"invalid event code in {text!r}")
    return events


def format_history(events: Sequence[int]) -> str:
    return "".join(str(int(e)) for e in events)


def first_event(events: Sequence[int]) -> int:
    """0-based position of the first nonzero event, or -1 if none."""
    for pos, e in enumerate(events):
        if e:
            return pos
    return -1


def is_valid_latent(events: Sequence[int]) -> bool:
    """True iff the first nonzero event is a 1 and it is not on the last occasion."""
    T = len(events)
    if any(e not in (0, 1, 2, 3) for e in events):
        return False
    pos = first_event(events)
    return pos >= 0 and events[pos] == SEEN and pos < T - 1


def is_valid_binary(events: Sequence[int]) -> bool:
    """Valid observed/capture history: binary, not all zero, not marked on the last occasion."""
    if any(e not in (0, 1) for e in events):
        return False
    pos = first_event(events)
    return 0 <= pos < len(events) - 1


def observed_of(nu: Sequence[int]) -> History:
    """Recorded pattern: an occasion reads 1 iff the event is 1 or 3."""
    return tuple(1 if e in (SEEN, FALSE_POSITIVE) else 0 for e in nu)


def capture_of(nu: Sequence[int]) -> History:
    """True capture pattern: an occasion reads 1 iff the event is 1 or 2."""
    return tuple(1 if e in (SEEN, FALSE_NEGATIVE) else 0 for e in nu)


# ---------------------------------------------------------------------------
# integer codes


def encode(events: Sequence[int], base: int) -> int:
    code = 0
    for e in events:
        code = code * base + int(e)
    return code


def decode(code: int, T: int, base: int) -> History:
    out = [0] * T
    for pos in range(T - 1, -1, -1):
        code, out[pos] = divmod(code, base)
    return tuple(out)


def latent_marking(code: int, T: int) -> int:
    """1-based marking occasion of a latent code (leading base-4 digit)."""
    return T - (code.bit_length() - 1) // 2


def latent_index(code: int, T: int) -> int:
    span = 4 ** (T - latent_marking(code, T))
    return (span - 4) // 3 + code - span


def latent_code_at(index: int, T: int) -> int:
    # blocks of codes with marking occasion s are laid out for s = T-1, T-2, ..., 1
    offset = 0
    for s in range(T - 1, 0, -1):
        span = 4 ** (T - s)
        if index < offset + span:
            return span + index - offset
        offset += span
    raise IndexError(index)


def binary_index(code: int) -> int:
    return code - 2


def binary_code_at(index: int) -> int:
    return index + 2


def observed_code(code: int, T: int) -> int:
    """Binary code of the observed history of a latent code."""
    out = 0
    for shift in range(2 * (T - 1), -1, -2):
        e = (code >> shift) & 3
        out = (out << 1) | (e & 1)  # 1 and 3 are the odd events
    return out


def capture_code(code: int, T: int) -> int:
    """Binary code of the capture history of a latent code."""
    out = 0
    for shift in range(2 * (T - 1), -1, -2):
        e = (code >> shift) & 3
        out = (out << 1) | (1 if e in (1, 2) else 0)
    return out


def embed_binary(code: int, T: int) -> int:
    """Latent code of an error-free history with the given binary pattern."""
    out = 0
    for shift in range(T - 1, -1, -1):
        out = (out << 2) | ((code >> shift) & 1)
    return out


def latent_event(code: int, T: int, t: int) -> int:
    """Event at 1-based occasion ``t``."""
    return (code >> (2 * (T - t))) & 3


def occasion_unit(T: int, t: int) -> int:
    """Code increment for raising the event at occasion ``t`` by one."""
    return 1 << (2 * (T - t))


def error_occasions(code: int, T: int) -> tuple[list[int], list[int]]:
    """1-based occasions carrying event 2 and event 3 respectively."""
    twos, threes = [], []
    for t in range(1, T + 1):
        e = latent_event(code, T, t)
        if e == FALSE_NEGATIVE:
            twos.append(t)
        elif e == FALSE_POSITIVE:
            threes.append(t)
    return twos, threes


# ---------------------------------------------------------------------------


class HistoryUniverse:
    """Canonically ordered alphabets for a study with ``T`` occasions.

    Index maps are closed-form; the explicit lists of histories are built on
    first access only.
    """

    def __init__(self, shape: StudyShape | int):
        if not isinstance(shape, StudyShape):
            shape = StudyShape(shape)
        self.shape = shape
        self.T = shape.T
        self.I, self.J, self.K = shape.I, shape.J, shape.K

    def __repr__(self):
        return f"HistoryUniverse(T={self.T}, I={self.I}, J={self.J}, K={self.K})"

    # index maps ------------------------------------------------------------
    def observed_at(self, i: int) -> History:
        if not 0 <= i < self.I:
            raise IndexError(i)
        return decode(binary_code_at(i), self.T, 2)

    def capture_at(self, k: int) -> History:
        if not 0 <= k < self.K:
            raise IndexError(k)
        return decode(binary_code_at(k), self.T, 2)

    def latent_at(self, j: int) -> History:
        if not 0 <= j < self.J:
            raise IndexError(j)
        return decode(latent_code_at(j, self.T), self.T, 4)

    def index_of_observed(self, omega: Sequence[int]) -> int:
        omega = tuple(omega)
        if len(omega) != self.T or not is_valid_binary(omega):
            raise ValueError(f"not a valid observed history for T={self.T}: {omega}")
        return binary_index(encode(omega, 2))

    index_of_capture = index_of_observed

    def index_of_latent(self, nu: Sequence[int]) -> int:
        nu = tuple(nu)
        if len(nu) != self.T or not is_valid_latent(nu):
            raise ValueError(f"not a valid latent error history for T={self.T}: {nu}")
        return latent_index(encode(nu, 4), self.T)

    # materialised alphabets -------------------------------------------------
    @cached_property
    def observed(self) -> list[History]:
        return [self.observed_at(i) for i in range(self.I)]

    @cached_property
    def latent_capture(self) -> list[History]:
        return list(self.observed)

    @cached_property
    def latent_codes(self) -> np.ndarray:
        """Latent codes in canonical order (int64)."""
        blocks = []
        for s in range(self.T - 1, 0, -1):
            span = 4 ** (self.T - s)
            blocks.append(np.arange(span, 2 * span, dtype=np.int64))
        return np.concatenate(blocks)

    @cached_property
    def latent_events(self) -> np.ndarray:
        """``J x T`` array of events (int8), row j is history j."""
        codes = self.latent_codes
        shifts = 2 * (self.T - 1 - np.arange(self.T, dtype=np.int64))
        return ((codes[:, None] >> shifts[None, :]) & 3).astype(np.int8)

    @cached_property
    def latent_error(self) -> list[History]:
        return [tuple(int(e) for e in row) for row in self.latent_events]

    def iter_latent(self) -> Iterator[History]:
        for j in range(self.J):
            yield self.latent_at(j)


def enumerate_universe(shape: StudyShape | int) -> HistoryUniverse:
    """Build the universe and materialise all three alphabets."""
    universe = HistoryUniverse(shape)
    universe.observed, universe.latent_capture, universe.latent_error
    return universe
