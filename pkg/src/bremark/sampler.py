"""Metropolis-within-Gibbs sampler for the CJS/band-read-error model.

Each outer iteration updates the capture parameters (and ``alpha`` when it is
estimated) by logit-scale random-walk steps, then proposes ``x_steps`` changes
of the latent configuration, either from the dynamic move set (``dynamic``)
or from the static list of every add/remove-error move (``fixed``).

Production runs go through a chain kernel (compiled when available, see
:mod:`bremark.kernels`).  The step functions ``update_theta``,
``update_x_dynamic`` and ``update_x_fixed`` are a direct, slower reference
implementation on top of :mod:`bremark.model` and :mod:`bremark.basis`; with
``check=True`` they assert the state invariants on every proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import SimpleNamespace

import numpy as np

from . import basis as mb
from .constraints import (
    ConstraintSystem,
    FibreError,
    apply_A,
    apply_B,
    extend_counts,
    zero_error_config,
)
from .diagnostics import effective_sample_size, summarize
from .histories import (
    HistoryUniverse,
    latent_code_at,
    latent_index,
)
from .kernels import get_kernel
from .kernels._pykernel import MASK64, mix64
from .model import (
    CaptureParams,
    ErrorParam,
    cjs_loglik_from_summary,
    cjs_summary,
    log_error_terms,
    log_factorial,
    log_joint,
    marked_before,
    releases_from_counts,
    stats_from,
)

ALGORITHMS = ("dynamic", "fixed")
NEG_INF = -math.inf


# ---------------------------------------------------------------------------
# data


class ObservedData:
    """Observed-history counts ``n`` of one study."""

    def __init__(self, T: int, counts):
        self.universe = HistoryUniverse(T)
        self.sys = ConstraintSystem(self.universe)
        n = np.asarray(counts, dtype=np.int64)
        if n.shape != (self.universe.I,):
            raise ValueError(f"expected {self.universe.I} observed counts, got shape {n.shape}")
        if (n < 0).any():
            raise FibreError("observed counts must be nonnegative")
        self.n = n

    @classmethod
    def from_histories(cls, histories, T: int) -> "ObservedData":
        """Tally individual histories; every one must be released before occasion T."""
        uni = HistoryUniverse(T)
        n = np.zeros(uni.I, dtype=np.int64)
        for h in histories:
            n[uni.index_of_observed(h)] += 1
        return cls(T, n)

    @property
    def T(self) -> int:
        return self.universe.T

    @cached_property
    def n_ext(self) -> np.ndarray:
        return extend_counts(self.n, self.sys)

    @cached_property
    def releases(self) -> np.ndarray:
        return releases_from_counts(self.n, self.universe)

    @cached_property
    def M(self) -> np.ndarray:
        return marked_before(self.releases)

    @cached_property
    def m(self) -> np.ndarray:
        # resightings after marking; equal for every element of the fibre
        return stats_from(None, self.n, self.releases, self.sys).m

    @property
    def individuals(self) -> int:
        return int(self.n.sum())


# ---------------------------------------------------------------------------
# configuration and state


@dataclass
class SamplerConfig:
    """Settings of one chain.

    ``phi_groups``/``p_groups`` map each occasion to a parameter label; equal
    labels share one parameter.  ``None`` gives every occasion its own.
    ``init_phi``/``init_p`` are per-occasion starting values; ``None`` draws
    them from the uniform prior.
    """

    algorithm: str = "dynamic"
    iterations: int = 10_000
    burnin: int = 1_000
    thin: int = 1
    seed: int = 0
    x_steps: int = 1
    update_x: bool = True
    update_theta: bool = True
    phi_groups: list | None = None
    p_groups: list | None = None
    init_phi: list | float | None = None
    init_p: list | float | None = None
    alpha: float = 1.0
    estimate_alpha: bool = False
    alpha_prior: tuple[float, float] = (19.0, 1.0)
    step_size: float = 0.5
    adapt: bool = True
    chunk: int = 2_000
    backend: str | None = None
    keep_hashes: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.iterations < 1 or self.burnin < 0 or self.burnin >= self.iterations:
            raise ValueError("need 0 <= burnin < iterations")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.x_steps < 0:
            raise ValueError("x_steps must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.chunk < 1:
            raise ValueError("chunk must be positive")
        if self.estimate_alpha and not (self.alpha_prior[0] > 0 and self.alpha_prior[1] > 0):
            raise ValueError("Beta prior parameters must be positive")


@dataclass
class ChainState:
    """Reference-sampler state; ``x`` is a sparse ``{latent index: count}`` dict."""

    theta1: CaptureParams
    theta2: ErrorParam
    x: dict
    z: np.ndarray
    data: ObservedData
    rng: np.random.Generator
    iter: int = 0
    log_joint: float = 0.0
    x_proposed: int = 0
    x_accepted: int = 0
    x_empty: int = 0
    theta_proposed: int = 0
    theta_accepted: int = 0
    reverse_checked: int = 0


def _group_map(groups, T: int, what: str) -> list[int]:
    if groups is None:
        return list(range(T - 1))
    groups = list(groups)
    if len(groups) != T - 1:
        raise ValueError(f"{what} groups need {T - 1} entries, got {len(groups)}")
    labels = {}
    return [labels.setdefault(g, len(labels)) for g in groups]


def _per_occasion(value, T: int, what: str):
    if value is None:
        return None
    arr = np.broadcast_to(np.asarray(value, dtype=float), (T - 1,)).copy()
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ValueError(f"{what} start values must lie in [0, 1]")
    return arr


def _chain_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def init_chain(data: ObservedData, config: SamplerConfig, stream: int = 0) -> ChainState:
    """Zero-error configuration plus starting parameters."""
    T = data.T
    rng = _chain_rng(config.seed, stream)
    phi = _per_occasion(config.init_phi, T, "phi")
    p = _per_occasion(config.init_p, T, "p")
    gphi = _group_map(config.phi_groups, T, "phi")
    gp = _group_map(config.p_groups, T, "p")
    if phi is None:
        draws = rng.random(max(gphi) + 1)
        phi = draws[gphi]
    if p is None:
        draws = rng.random(max(gp) + 1)
        p = draws[gp]
    theta1 = CaptureParams(phi, p)
    theta2 = ErrorParam(config.alpha, estimate=config.estimate_alpha, prior=config.alpha_prior)
    x = zero_error_config(data.n, data.universe, sparse=True)
    z = apply_B(x, data.sys)
    state = ChainState(theta1, theta2, x, z, data, rng)
    state.log_joint = log_joint(x, z, theta1, theta2, data.n_ext, data.sys)
    return state


# ---------------------------------------------------------------------------
# reference steps


def _free_params(state: ChainState, config: SamplerConfig):
    T = state.data.T
    gphi = _group_map(config.phi_groups, T, "phi")
    gp = _group_map(config.p_groups, T, "p")
    nphi = max(gphi) + 1
    free = [None] * (nphi + max(gp) + 1)
    for t, g in enumerate(gphi):
        free[g] = ("phi", [u for u, h in enumerate(gphi) if h == g])
    for t, g in enumerate(gp):
        free[nphi + g] = ("p", [u for u, h in enumerate(gp) if h == g])
    return free


def _error_loglik(state: ChainState, alpha: float) -> float:
    d = state.data
    stats = stats_from(state.x, state.z, d.releases, d.sys)
    return log_error_terms(stats, alpha)


def update_theta(state: ChainState, config: SamplerConfig, scale: float | None = None) -> ChainState:
    """One logit random-walk Metropolis step per free parameter."""
    scale = config.step_size if scale is None else scale
    rng = state.rng
    summary = cjs_summary(state.z, state.data.universe)
    current = cjs_loglik_from_summary(summary, state.theta1)
    for kind, occasions in _free_params(state, config):
        vec = getattr(state.theta1, kind)
        cur = float(vec[occasions[0]])
        prop = 1.0 / (1.0 + math.exp(-(math.log(cur / (1.0 - cur)) + scale * rng.standard_normal())))
        state.theta_proposed += 1
        if not 0.0 < prop < 1.0:
            continue
        new = vec.copy()
        new[occasions] = prop
        trial = replace(state.theta1, **{kind: new})
        ll = cjs_loglik_from_summary(summary, trial)
        diff = ll - current + math.log(prop * (1.0 - prop)) - math.log(cur * (1.0 - cur))
        if math.log(1.0 - rng.random()) < diff:
            state.theta1 = trial
            current = ll
            state.theta_accepted += 1
    if state.theta2.estimate:
        a, b = state.theta2.prior
        cur = state.theta2.alpha
        prop = 1.0 / (1.0 + math.exp(-(math.log(cur / (1.0 - cur)) + scale * rng.standard_normal())))
        state.theta_proposed += 1
        if 0.0 < prop < 1.0:
            diff = (_error_loglik(state, prop) - _error_loglik(state, cur)
                    + a * math.log(prop) + b * math.log(1.0 - prop)
                    - a * math.log(cur) - b * math.log(1.0 - cur))
            if math.log(1.0 - rng.random()) < diff:
                state.theta2 = replace(state.theta2, alpha=prop)
                state.theta_accepted += 1
    d = state.data
    state.log_joint = log_joint(state.x, state.z, state.theta1, state.theta2, d.n_ext, d.sys)
    return state


def check_state(x: dict, z, data: ObservedData) -> None:
    """Assert ``x >= 0``, ``A x = n_ext``, ``z = B x`` and per-occasion error balance."""
    if any(c < 0 for c in x.values()):
        raise AssertionError("negative latent count")
    ax = apply_A(x, data.sys)
    if not np.array_equal(ax, data.n_ext):
        raise AssertionError(f"A x = {ax.tolist()} differs from n_ext = {data.n_ext.tolist()}")
    if not np.array_equal(apply_B(x, data.sys), np.asarray(z)):
        raise AssertionError("z differs from B x")
    T = data.T
    twos = np.zeros(T + 1, dtype=np.int64)
    threes = np.zeros(T + 1, dtype=np.int64)
    for j, c in x.items():
        code = latent_code_at(j, T)
        for t in range(2, T + 1):
            ev = (code >> (2 * (T - t))) & 3
            if ev == 2:
                twos[t] += c
            elif ev == 3:
                threes[t] += c
    if not np.array_equal(twos, threes):
        raise AssertionError("false negatives and false positives are unbalanced")


def _metropolis(state: ChainState, x_prop: dict, log_q: float, check: bool) -> bool:
    d = state.data
    z_prop = apply_B(x_prop, d.sys) if all(c >= 0 for c in x_prop.values()) else None
    if check and z_prop is not None:
        check_state(x_prop, z_prop, d)
    if z_prop is None:
        return False
    lj = log_joint(x_prop, z_prop, state.theta1, state.theta2, d.n_ext, d.sys)
    if lj == NEG_INF:
        return False
    if math.log(1.0 - state.rng.random()) < lj - state.log_joint + log_q:
        state.x, state.z, state.log_joint = x_prop, z_prop, lj
        state.x_accepted += 1
        return True
    return False


def update_x_dynamic(state: ChainState, check: bool = False) -> ChainState:
    """One proposal from the dynamic move set."""
    uni = state.data.universe
    state.x_proposed += 1
    add = state.rng.random() < 0.5
    draw = (mb.sample_add_move if add else mb.sample_remove_move)(state.x, uni, state.rng)
    if draw is None:
        state.x_empty += 1
        return state
    x_prop = draw.move.apply(state.x, draw.direction)
    rev = mb.reverse_logq(x_prop, draw, uni)
    if check:
        if rev == NEG_INF:
            raise AssertionError("proposal has no reverse move")
        state.reverse_checked += 1
    _metropolis(state, x_prop, rev - draw.forward_logq, check)
    return state


def update_x_fixed(state: ChainState, moves: list, check: bool = False) -> ChainState:
    """One proposal ``x + c b`` with ``b`` uniform over ``moves`` and ``c = +-1``."""
    state.x_proposed += 1
    c = 1 if state.rng.random() < 0.5 else -1
    move = moves[int(state.rng.integers(len(moves)))]
    x_prop = move.apply(state.x, c)
    if any(v < 0 for v in x_prop.values()):
        return state
    _metropolis(state, x_prop, 0.0, check)
    return state


def reference_chain(data: ObservedData, config: SamplerConfig, check: bool = True, moves=None):
    """Run the reference sampler; returns ``(state, trace)`` where ``trace``
    lists the configuration (as a sorted item tuple) after every x step."""
    state = init_chain(data, config)
    if config.algorithm == "fixed" and moves is None:
        moves = mb.static_full_basis(data.universe)
    trace = []
    for _ in range(config.iterations):
        if config.update_theta:
            update_theta(state, config)
        if config.update_x:
            for _ in range(config.x_steps):
                if config.algorithm == "dynamic":
                    update_x_dynamic(state, check)
                else:
                    update_x_fixed(state, moves, check)
                trace.append(tuple(sorted(state.x.items())))
        state.iter += 1
    return state, trace


# ---------------------------------------------------------------------------
# kernel-driven runs


@dataclass
class Diagnostics:
    x_proposed: int
    x_accepted: int
    x_empty: int
    x_acceptance: float
    x_acceptance_all: float
    distinct_x: int
    distinct_x_all: int
    theta_acceptance: list
    ess: dict
    log_step: list
    retained_x_steps: int


@dataclass
class RunResult:
    names: list
    theta: np.ndarray  # retained draws, one column per name
    errors: np.ndarray
    log_joint: np.ndarray
    iterations: np.ndarray
    x_errors: np.ndarray
    x_hashes: np.ndarray
    diagnostics: Diagnostics
    final_x: dict = field(default_factory=dict)
    backend: str = ""

    def summary(self) -> dict:
        return posterior_summary(self)


def x_hash(x: dict, T: int) -> int:
    """The kernels' order-free hash of a sparse configuration."""
    h = 0
    for j, c in x.items():
        if c:
            h = (h + mix64(latent_code_at(j, T), c)) & MASK64
    return h


def parameter_names(T: int) -> list[str]:
    return [f"phi_{t}" for t in range(1, T)] + [f"p_{t}" for t in range(2, T + 1)] + ["alpha"]


def build_kernel_spec(data: ObservedData, config: SamplerConfig, theta1: CaptureParams):
    """Plain namespace consumed by both chain kernels."""
    T = data.T
    gphi = _group_map(config.phi_groups, T, "phi")
    gp = _group_map(config.p_groups, T, "p")
    nphi, np_ = max(gphi) + 1, max(gp) + 1
    free = [0.0] * (nphi + np_)
    for t, g in enumerate(gphi):
        free[g] = float(theta1.phi[t])
    for t, g in enumerate(gp):
        free[nphi + g] = float(theta1.p[t])
    if config.update_theta:
        # logit steps need interior values
        free = [min(max(v, 1e-6), 1.0 - 1e-6) for v in free]
    n_theta1 = len(free)
    estimate = bool(config.estimate_alpha and config.update_theta)
    alpha = config.alpha
    if estimate:
        alpha = min(max(alpha, 1e-6), 1.0 - 1e-6)
        free.append(alpha)
    phi = np.array([free[g] for g in gphi])
    p = np.array([free[nphi + g] for g in gp])
    if config.algorithm == "fixed" and config.update_x:
        moves = mb.static_full_basis(data.universe)
        basis_codes = np.array([m.codes for m in moves], dtype=np.int64)
    else:
        basis_codes = np.zeros((0, 4), dtype=np.int64)
    x0 = zero_error_config(data.n, data.universe, sparse=True)
    codes = np.array([latent_code_at(j, T) for j in sorted(x0)], dtype=np.int64)
    counts = np.array([x0[j] for j in sorted(x0)], dtype=np.int64)
    N = max(int(data.n.sum()), 1)
    return SimpleNamespace(
        T=T,
        log_fact=np.ascontiguousarray(log_factorial.table(N + 1)[: N + 2], dtype=float),
        M=np.ascontiguousarray(data.M, dtype=np.int64),
        m=np.ascontiguousarray(data.m, dtype=np.int64),
        releases=np.ascontiguousarray(data.releases, dtype=np.int64),
        phi=np.ascontiguousarray(phi, dtype=float),
        p=np.ascontiguousarray(p, dtype=float),
        alpha=float(alpha),
        phi_group=np.array(gphi, dtype=np.int64),
        p_group=np.array([nphi + g for g in gp], dtype=np.int64),
        free=np.array(free, dtype=float),
        n_theta1=n_theta1,
        estimate_alpha=estimate,
        alpha_prior=tuple(float(v) for v in config.alpha_prior),
        update_theta=bool(config.update_theta),
        log_step=np.full(len(free), math.log(config.step_size)),
        adapt=bool(config.adapt),
        burnin=int(config.burnin),
        algorithm=ALGORITHMS.index(config.algorithm),
        basis_codes=basis_codes,
        x_steps=int(config.x_steps) if config.update_x else 0,
        update_x=bool(config.update_x),
        codes=codes,
        counts=counts,
    )


def make_kernel(data: ObservedData, config: SamplerConfig, stream: int = 0):
    """Kernel at the chain start plus the generator feeding it."""
    state = init_chain(data, config, stream)
    spec = build_kernel_spec(data, config, state.theta1)
    kernel = get_kernel(config.backend)(spec)
    return kernel, state.rng, spec


def _advance(kernel, rng, spec, n_iter: int):
    n_free = len(spec.free)
    xs = spec.x_steps
    normals = rng.standard_normal((n_iter, n_free))
    theta_unifs = 1.0 - rng.random((n_iter, n_free))
    x_unifs = 1.0 - rng.random((n_iter, xs, 5))
    T = spec.T
    out = dict(
        theta=np.zeros((n_iter, 2 * T - 1)),
        errors=np.zeros(n_iter, dtype=np.int64),
        log_joint=np.zeros(n_iter),
        x_errors=np.zeros((n_iter, xs), dtype=np.int64),
        x_hashes=np.zeros((n_iter, xs), dtype=np.uint64),
    )
    kernel.advance(n_iter, normals, theta_unifs, x_unifs, out["theta"], out["errors"],
                   out["log_joint"], out["x_errors"], out["x_hashes"])
    return out


def run(data: ObservedData, config: SamplerConfig, stream: int = 0) -> RunResult:
    """Run one chain; deterministic in ``(data, config, stream)``."""
    kernel, rng, spec = make_kernel(data, config, stream)
    T = data.T
    pieces = []
    done = 0
    start_hash = int(kernel.hash_value)
    counters_at_burnin = None
    if config.burnin == 0:
        counters_at_burnin = kernel.counters()
    while done < config.iterations:
        size = min(config.chunk, config.iterations - done)
        if done < config.burnin:
            size = min(size, config.burnin - done)
        block = _advance(kernel, rng, spec, size)
        block["iteration"] = np.arange(done, done + size)
        pieces.append(block)
        done += size
        if done == config.burnin:
            counters_at_burnin = kernel.counters()
    merged = {k: np.concatenate([b[k] for b in pieces]) for k in pieces[0]}
    final = kernel.counters()
    keep = merged["iteration"] >= config.burnin
    thin_mask = keep & ((merged["iteration"] - config.burnin) % config.thin == 0)

    retained_hashes = merged["x_hashes"][keep].ravel()
    all_hashes = np.concatenate([[np.uint64(start_hash)], merged["x_hashes"].ravel()])
    prop_ret = final["x_proposed"] - counters_at_burnin["x_proposed"]
    acc_ret = final["x_accepted"] - counters_at_burnin["x_accepted"]
    names = parameter_names(T)
    theta = merged["theta"][thin_mask]
    ess = {name: effective_sample_size(theta[:, i]) for i, name in enumerate(names)}
    ess["errors"] = effective_sample_size(merged["errors"][thin_mask])
    tp = np.asarray(final["theta_proposed"], dtype=float)
    ta = np.asarray(final["theta_accepted"], dtype=float)
    diag = Diagnostics(
        x_proposed=int(final["x_proposed"]),
        x_accepted=int(final["x_accepted"]),
        x_empty=int(final["x_empty"]),
        x_acceptance=acc_ret / prop_ret if prop_ret else 0.0,
        x_acceptance_all=final["x_accepted"] / final["x_proposed"] if final["x_proposed"] else 0.0,
        distinct_x=int(len(np.unique(retained_hashes))),
        distinct_x_all=int(len(np.unique(all_hashes))),
        theta_acceptance=[float(a / p) if p else 0.0 for a, p in zip(ta, tp)],
        ess=ess,
        log_step=[float(v) for v in final["log_step"]],
        retained_x_steps=int(retained_hashes.size),
    )
    codes, counts = kernel.support()
    final_x = {latent_index(int(c), T): int(n) for c, n in zip(codes, counts)}
    return RunResult(
        names=names,
        theta=theta,
        errors=merged["errors"][thin_mask],
        log_joint=merged["log_joint"][thin_mask],
        iterations=merged["iteration"][thin_mask],
        x_errors=merged["x_errors"][keep],
        x_hashes=retained_hashes if config.keep_hashes else np.zeros(0, dtype=np.uint64),
        diagnostics=diag,
        final_x=final_x,
        backend=kernel.backend,
    )


def posterior_summary(samples, names=None, level: float = 0.95) -> dict:
    """Per-parameter mean, central ``level`` interval and ESS."""
    if isinstance(samples, RunResult):
        return summarize(samples.theta, samples.names, level)
    return summarize(samples, names, level)
