"""Likelihood of the CJS/band-read-error model.

The complete-data density factorises as

    pi(x, z | theta) = pi(z | phi, p) * pi(x | z, alpha)

where ``pi(z | .)`` is the CJS product multinomial over true capture histories
(one multinomial per release cohort) and ``pi(x | z, alpha)`` spreads the
misreads of each occasion over the resighted individuals (false negatives)
and the marked-but-unseen individuals (false positives).  Everything is
evaluated in log space; zero probability is ``-inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSystem, apply_A, apply_B, total_errors, _items
from .histories import HistoryUniverse, binary_code_at, decode, first_event

NEG_INF = -math.inf


# ---------------------------------------------------------------------------
# numerics


class LogFactorial:
    """Growing table of ``log(k!)`` computed with ``lgamma``."""

    def __init__(self, size: int = 256):
        self._table = np.array([math.lgamma(k + 1.0) for k in range(size)])

    def table(self, upto: int) -> np.ndarray:
        if upto >= len(self._table):
            size = max(upto + 1, 2 * len(self._table))
            self._table = np.array([math.lgamma(k + 1.0) for k in range(size)])
        return self._table

    def __call__(self, k: int) -> float:
        return float(self.table(k)[k])


log_factorial = LogFactorial()


def log_choose(n: int, k: int) -> float:
    if k < 0 or k > n:
        return NEG_INF
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k)


def xlog(k: float, v: float) -> float:
    """``k * log(v)`` with ``0 * log(0) = 0``."""
    if k == 0:
        return 0.0
    if v <= 0.0:
        return NEG_INF
    return k * math.log(v)


def logsumexp(values) -> float:
    values = [v for v in values if v != NEG_INF]
    if not values:
        return NEG_INF
    top = max(values)
    return top + math.log(sum(math.exp(v - top) for v in values))


# ---------------------------------------------------------------------------
# parameters


@dataclass
class CaptureParams:
    """Survival ``phi[t-1]`` for t = 1..T-1 and capture ``p[t-2]`` for t = 2..T."""

    phi: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.phi.shape != self.p.shape or self.phi.ndim != 1:
            raise ValueError("phi and p must be vectors of equal length T - 1")
        for name, v in (("phi", self.phi), ("p", self.p)):
            if not np.all((v >= 0.0) & (v <= 1.0)):
                raise ValueError(f"{name} entries must lie in [0, 1]")

    @property
    def T(self) -> int:
        return len(self.phi) + 1

    @classmethod
    def constant(cls, T: int, phi: float, p: float) -> "CaptureParams":
        return cls(np.full(T - 1, phi), np.full(T - 1, p))


@dataclass
class ErrorParam:
    """Correct-identification probability, fixed or estimated under a Beta prior."""

    alpha: float
    estimate: bool = False
    prior: tuple[float, float] = (19.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.estimate and not (self.prior[0] > 0 and self.prior[1] > 0):
            raise ValueError("Beta prior parameters must be positive")


@dataclass
class SufficientStats:
    """Occasion-level summaries.

    ``a`` has one entry per release occasion 1..T-1; the remaining vectors
    have one entry per occasion 2..T.
    """

    a: np.ndarray
    M: np.ndarray
    m: np.ndarray
    mstar: np.ndarray = field(init=False)
    e: np.ndarray = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.int64)
        self.M = np.asarray(self.M, dtype=np.int64)
        self.m = np.asarray(self.m, dtype=np.int64)
        if self.e is None:
            self.e = np.zeros_like(self.m)
        self.e = np.asarray(self.e, dtype=np.int64)
        self.mstar = np.minimum(self.m, self.M - self.m)


# ---------------------------------------------------------------------------
# CJS component


def cjs_chi(theta1: CaptureParams) -> np.ndarray:
    """``chi[t-1]``: probability of never being seen after occasion t."""
    T = theta1.T
    chi = np.ones(T)
    for t in range(T - 1, 0, -1):
        phi, p = theta1.phi[t - 1], theta1.p[t - 1]
        chi[t - 1] = (1.0 - phi) + phi * (1.0 - p) * chi[t]
    return chi


def cjs_history_logprob(xi, theta1: CaptureParams, chi: np.ndarray | None = None) -> float:
    """Log CJS probability of a capture history conditional on first release."""
    xi = tuple(int(v) for v in xi)
    T = len(xi)
    if T != theta1.T:
        raise ValueError("history length does not match the parameters")
    f = first_event(xi)
    if f < 0 or f == T - 1:
        raise ValueError(f"history {xi} is not released before the last occasion")
    last = max(pos for pos, v in enumerate(xi) if v)
    if chi is None:
        chi = cjs_chi(theta1)
    out = 0.0
    for pos in range(f, last):
        phi, p = theta1.phi[pos], theta1.p[pos]
        seen = xi[pos + 1]
        out += xlog(1, phi) + (xlog(1, p) if seen else xlog(1, 1.0 - p))
        if out == NEG_INF:
            return NEG_INF
    return out + xlog(1, chi[last])


def releases_from_counts(counts, universe: HistoryUniverse) -> np.ndarray:
    """Per-occasion release totals ``a_1..a_{T-1}`` of binary-history counts."""
    T = universe.T
    counts = np.asarray(counts)[: universe.I]
    a = np.zeros(T - 1, dtype=np.int64)
    for i in np.flatnonzero(counts):
        a[first_event(decode(binary_code_at(int(i)), T, 2))] += counts[i]
    return a


def marked_before(releases) -> np.ndarray:
    """``M_t`` for t = 2..T."""
    return np.cumsum(np.asarray(releases, dtype=np.int64))


def log_pi_z(z, theta1: CaptureParams, releases, universe: HistoryUniverse) -> float:
    """Log product-multinomial density of capture-history counts."""
    z = np.asarray(z, dtype=np.int64)
    releases = np.asarray(releases, dtype=np.int64)
    if not np.array_equal(releases_from_counts(z, universe), releases):
        return NEG_INF
    chi = cjs_chi(theta1)
    out = sum(log_factorial(int(a)) for a in releases)
    for k in np.flatnonzero(z):
        c = int(z[k])
        lp = cjs_history_logprob(universe.capture_at(int(k)), theta1, chi)
        if lp == NEG_INF:
            return NEG_INF
        out += c * lp - log_factorial(c)
    return out


def cjs_summary(z, universe: HistoryUniverse) -> dict[str, np.ndarray]:
    """Counts that make the CJS log-likelihood linear in log-parameters.

    ``alive[t-1]``: known survivals over interval t (t = 1..T-1);
    ``seen[t-2]`` / ``missed[t-2]``: captures / non-captures at occasion t of
    individuals known alive there; ``last[t-1]``: histories last seen at t.
    """
    T = universe.T
    alive = np.zeros(T - 1, dtype=np.int64)
    seen = np.zeros(T - 1, dtype=np.int64)
    missed = np.zeros(T - 1, dtype=np.int64)
    last = np.zeros(T, dtype=np.int64)
    z = np.asarray(z)
    for k in np.flatnonzero(z):
        c = int(z[k])
        xi = universe.capture_at(int(k))
        f = first_event(xi)
        lst = max(pos for pos, v in enumerate(xi) if v)
        for pos in range(f, lst):
            alive[pos] += c
            if xi[pos + 1]:
                seen[pos] += c
            else:
                missed[pos] += c
        last[lst] += c
    return {"alive": alive, "seen": seen, "missed": missed, "last": last}


def cjs_loglik_from_summary(summary, theta1: CaptureParams) -> float:
    """``sum_k z_k log pr(xi_k)`` from :func:`cjs_summary` output."""
    chi = cjs_chi(theta1)
    out = 0.0
    for t in range(theta1.T - 1):
        out += xlog(summary["alive"][t], theta1.phi[t])
        out += xlog(summary["seen"][t], theta1.p[t])
        out += xlog(summary["missed"][t], 1.0 - theta1.p[t])
    for t in range(theta1.T):
        out += xlog(summary["last"][t], chi[t])
    return out


# ---------------------------------------------------------------------------
# error component


def log_trunc_binom(e: int, m: int, M: int, alpha: float) -> float:
    """Log mass at ``e`` of Binomial(m, 1 - alpha) truncated to 0..min(m, M - m)."""
    if m < 0 or M < m:
        raise ValueError(f"inconsistent occasion totals m={m}, M={M}")
    mstar = min(m, M - m)
    if e < 0 or e > mstar:
        return NEG_INF

    def term(k):
        return log_choose(m, k) + xlog(k, 1.0 - alpha) + xlog(m - k, alpha)

    num = term(e)
    if num == NEG_INF:
        return NEG_INF
    return num - logsumexp(term(k) for k in range(mstar + 1))


def stats_from(x, z, releases, sys: ConstraintSystem) -> SufficientStats:
    """Occasion summaries of a latent configuration and its capture counts."""
    T = sys.T
    releases = np.asarray(releases, dtype=np.int64)
    M = marked_before(releases)
    m = np.zeros(T - 1, dtype=np.int64)
    z = np.asarray(z)
    for k in np.flatnonzero(z):
        xi = sys.universe.capture_at(int(k))
        f = first_event(xi)
        for pos in range(f + 1, T):
            if xi[pos]:
                m[pos - 1] += z[k]
    e = total_errors(x, sys) if x is not None else None
    return SufficientStats(a=releases, M=M, m=m, e=e)


def log_error_terms(stats: SufficientStats, alpha: float) -> float:
    """Per-occasion error-count mass times the uniform assignment probability."""
    out = 0.0
    for t in range(len(stats.m)):
        e, m, M = int(stats.e[t]), int(stats.m[t]), int(stats.M[t])
        lp = log_trunc_binom(e, m, M, alpha)
        if lp == NEG_INF:
            return NEG_INF
        out += lp - log_choose(M - m, e) - log_choose(m, e)
    return out


def log_pi_x_given_z(x, z, alpha: float, stats: SufficientStats, sys: ConstraintSystem) -> float:
    z = np.asarray(z, dtype=np.int64)
    if not np.array_equal(apply_B(x, sys), z):
        return NEG_INF
    err = log_error_terms(stats, alpha)
    if err == NEG_INF:
        return NEG_INF
    relabel = sum(log_factorial(int(c)) for c in z[z > 0])
    relabel -= sum(log_factorial(c) for _, c in _items(x, sys.J))
    return relabel + err


def log_joint(x, z, theta1: CaptureParams, theta2: ErrorParam | float, n_ext, sys: ConstraintSystem) -> float:
    """``log pi(x, z | theta)`` on the fibre of ``n_ext``, ``-inf`` off it.

    Priors are not included.
    """
    alpha = theta2.alpha if isinstance(theta2, ErrorParam) else float(theta2)
    n_ext = np.asarray(n_ext, dtype=np.int64)
    if isinstance(x, dict):
        if any(c < 0 for c in x.values()):
            return NEG_INF
    elif (np.asarray(x) < 0).any():
        return NEG_INF
    if not np.array_equal(apply_A(x, sys), n_ext):
        return NEG_INF
    z = np.asarray(z, dtype=np.int64)
    if not np.array_equal(apply_B(x, sys), z):
        return NEG_INF
    releases = releases_from_counts(n_ext, sys.universe)
    stats = stats_from(x, z, releases, sys)
    lx = log_pi_x_given_z(x, z, alpha, stats, sys)
    if lx == NEG_INF:
        return NEG_INF
    return lx + log_pi_z(z, theta1, releases, sys.universe)


# ---------------------------------------------------------------------------
# priors


def log_beta_prior(v: float, a: float, b: float) -> float:
    if not 0.0 <= v <= 1.0:
        return NEG_INF
    norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    return norm + xlog(a - 1.0, v) + xlog(b - 1.0, 1.0 - v)


def log_prior_theta1(theta1: CaptureParams) -> float:
    """Independent Uniform(0, 1) priors."""
    ok = np.all((theta1.phi >= 0) & (theta1.phi <= 1) & (theta1.p >= 0) & (theta1.p <= 1))
    return 0.0 if ok else NEG_INF
