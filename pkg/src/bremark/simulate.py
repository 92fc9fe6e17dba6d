"""Synthetic studies: CJS capture histories, band-read corruption and the
replication study comparing three fits of the same simulated data.

Model 1 fits the CJS model to the true capture histories, Model 2 fits the
same CJS model to the corrupted records as if they were error free, and
Model 3 fits the CJS/band-read-error model to the corrupted records with the
dynamic sampler.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .histories import HistoryUniverse, latent_index
from .model import CaptureParams, log_trunc_binom
from .sampler import ObservedData, SamplerConfig, posterior_summary, run

MODELS = ("model1", "model2", "model3")


@dataclass
class StudyDesign:
    """Releases ``a_1..a_{T-1}`` and the generating parameters.

    ``phi``/``p`` are per-occasion vectors of length ``T - 1`` (``p[0]`` is
    the capture probability at occasion 2).
    """

    T: int
    releases: list
    phi: list
    p: list
    alphas: list = field(default_factory=lambda: [8 / 9, 6 / 9])
    replicates: int = 20
    seed: int = 0

    def __post_init__(self):
        HistoryUniverse(self.T)  # validates T
        self.releases = [int(a) for a in self.releases]
        if len(self.releases) == self.T:
            self.releases = self.releases[:-1]  # final-occasion marks are conditioned out
        if len(self.releases) != self.T - 1 or min(self.releases, default=0) < 0:
            raise ValueError(f"need {self.T - 1} nonnegative release counts")
        self.phi = [float(v) for v in np.broadcast_to(self.phi, (self.T - 1,))]
        self.p = [float(v) for v in np.broadcast_to(self.p, (self.T - 1,))]
        CaptureParams(self.phi, self.p)  # validates ranges
        for a in self.alphas:
            if not 0.0 <= a <= 1.0:
                raise ValueError("alpha values must lie in [0, 1]")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")

    @property
    def theta1(self) -> CaptureParams:
        return CaptureParams(self.phi, self.p)

    @classmethod
    def mixing(cls, seed: int = 0) -> "StudyDesign":
        """Four occasions, ten releases on each of the first three."""
        return cls(T=4, releases=[10, 10, 10], phi=[0.8] * 3, p=[0.5] * 3, alphas=[0.5], seed=seed)

    @classmethod
    def overwinter(cls, replicates: int = 20, seed: int = 0, p: float = 0.25) -> "StudyDesign":
        """Ten occasions, 61 then 41 releases, survival 0.66 / 1.00 / 0.93."""
        return cls(T=10, releases=[61, 41] + [0] * 7, phi=[0.66, 1.0] + [0.93] * 7,
                   p=[p] * 9, alphas=[8 / 9, 6 / 9], replicates=replicates, seed=seed)


def simulate_cjs(releases, theta1: CaptureParams, rng: np.random.Generator) -> np.ndarray:
    """True capture histories, one row per released individual (int8, 0/1)."""
    T = theta1.T
    releases = [int(a) for a in releases][: T - 1]
    rows = []
    for s, a in enumerate(releases):
        for _ in range(a):
            h = np.zeros(T, dtype=np.int8)
            h[s] = 1
            for t in range(s + 1, T):
                if rng.random() >= theta1.phi[t - 1]:
                    break
                if rng.random() < theta1.p[t - 1]:
                    h[t] = 1
            rows.append(h)
    if not rows:
        return np.zeros((0, T), dtype=np.int8)
    return np.vstack(rows)


@lru_cache(maxsize=4096)
def trunc_binom_probs(m: int, M: int, alpha: float) -> np.ndarray:
    mstar = min(m, M - m)
    probs = np.exp([log_trunc_binom(e, m, M, alpha) for e in range(mstar + 1)])
    return probs / probs.sum()


@dataclass
class CorruptedData:
    observed: np.ndarray  # individual recorded histories (0/1)
    latent: np.ndarray  # individual latent error histories (0..3)
    n: np.ndarray  # observed-history counts
    x: dict  # latent error counts {index: count}
    errors: np.ndarray  # errors per occasion 2..T


def corrupt_bre(histories, alpha: float, rng: np.random.Generator) -> CorruptedData:
    """Misread resightings: at each occasion ``E_t`` resighted individuals are
    recorded as ``E_t`` distinct marked individuals that were not seen there.

    ``E_t`` follows the binomial(m_t, 1 - alpha) law truncated to the number
    of available recipients; misread individuals and recipients are chosen
    uniformly.
    """
    hist = np.asarray(histories, dtype=np.int8)
    N, T = hist.shape if hist.ndim == 2 else (0, 0)
    latent = hist.copy()
    errors = np.zeros(max(T - 1, 0), dtype=np.int64)
    if N:
        first = hist.argmax(axis=1)
        for t in range(1, T):  # 0-based occasion
            marked = np.flatnonzero(first < t)
            seen = marked[hist[marked, t] == 1]
            unseen = marked[hist[marked, t] == 0]
            probs = trunc_binom_probs(len(seen), len(marked), float(alpha))
            e = int(rng.choice(len(probs), p=probs)) if len(probs) > 1 else 0
            if e:
                latent[rng.choice(seen, e, replace=False), t] = 2
                latent[rng.choice(unseen, e, replace=False), t] = 3
            errors[t - 1] = e
    observed = (latent % 2).astype(np.int8)
    if not T:
        return CorruptedData(observed, latent, np.zeros(0, dtype=np.int64), {}, errors)
    n = capture_counts(observed, T)
    codes, counts = np.unique(latent.astype(np.int64) @ (4 ** np.arange(T - 1, -1, -1)), return_counts=True)
    x = {latent_index(int(c), T): int(k) for c, k in zip(codes, counts)}
    return CorruptedData(observed, latent, n, x, errors)


def capture_counts(histories, T: int) -> np.ndarray:
    """Counts over the binary alphabet of individual 0/1 histories."""
    uni = HistoryUniverse(T)
    h = np.asarray(histories, dtype=np.int64).reshape(-1, T)
    first = h.argmax(axis=1)
    if len(h) and (not h.any(axis=1).all() or (first == T - 1).any()):
        raise ValueError("every history must be recorded before the final occasion")
    return np.bincount(h @ (2 ** np.arange(T - 1, -1, -1)) - 2, minlength=uni.I).astype(np.int64)


# ---------------------------------------------------------------------------
# replication study


@dataclass
class FitSettings:
    """Sampler settings shared by the three models of the study."""

    iterations: int = 12_000
    burnin: int = 2_000
    thin: int = 1
    x_steps: int = 10
    phi_groups: list | None = None
    p_groups: list | None = None
    estimate_alpha: bool = False
    alpha_prior: tuple = (19.0, 1.0)
    backend: str | None = None


def study_phi_groups(T: int) -> list:
    """Separate first two survival rates, one shared rate afterwards."""
    return [min(t, 2) for t in range(T - 1)]


@dataclass
class StudyReport:
    """Per (model, alpha, parameter) cell: bias, width and coverage."""

    rows: list  # dicts with model, alpha, parameter, truth, bias, width, coverage, replicates, boundary
    failures: list
    replicates: int
    design: dict

    def cell(self, model: str, alpha: float, parameter: str) -> dict:
        for r in self.rows:
            if r["model"] == model and abs(r["alpha"] - alpha) < 1e-9 and r["parameter"] == parameter:
                return r
        raise KeyError((model, alpha, parameter))


def _fit(counts, T, settings: FitSettings, update_x: bool, alpha: float, seed: int):
    data = ObservedData(T, counts)
    cfg = SamplerConfig(
        algorithm="dynamic",
        iterations=settings.iterations,
        burnin=settings.burnin,
        thin=settings.thin,
        seed=seed,
        x_steps=settings.x_steps,
        update_x=update_x,
        phi_groups=settings.phi_groups,
        p_groups=settings.p_groups,
        init_phi=0.5,
        init_p=0.5,
        alpha=alpha,
        estimate_alpha=settings.estimate_alpha and update_x,
        alpha_prior=settings.alpha_prior,
        backend=settings.backend,
    )
    res = run(data, cfg)
    return posterior_summary(res), res.diagnostics


def run_replicate(design: StudyDesign, settings: FitSettings, r: int) -> dict:
    """Simulate one true data set, corrupt it at every alpha and fit the models.

    Returns ``{(model, alpha): summary}``; Model 1 is stored under every alpha.
    """
    ss = np.random.SeedSequence(design.seed, spawn_key=(r,))
    sim_seed, *corrupt_seeds = ss.spawn(1 + len(design.alphas))
    rng = np.random.default_rng(sim_seed)
    T = design.T
    truth = simulate_cjs(design.releases, design.theta1, rng)
    fit_seed = int(ss.generate_state(1)[0])
    out = {}
    m1, _ = _fit(capture_counts(truth, T), T, settings, False, 1.0, fit_seed)
    for a_idx, alpha in enumerate(design.alphas):
        crng = np.random.default_rng(corrupt_seeds[a_idx])
        cd = corrupt_bre(truth, alpha, crng)
        out[("model1", alpha)] = m1
        out[("model2", alpha)], _ = _fit(cd.n, T, settings, False, alpha, fit_seed + 1)
        out[("model3", alpha)], _ = _fit(cd.n, T, settings, True, alpha, fit_seed + 2)
    return out


def _replicate_job(args):
    design, settings, r = args
    try:
        return r, run_replicate(design, settings, r), None
    except Exception as exc:  # recorded, not fatal
        return r, None, f"{type(exc).__name__}: {exc}"


def replication_study(design: StudyDesign, settings: FitSettings | None = None,
                      workers: int = 1, progress=None) -> StudyReport:
    """Bias, interval width and coverage of the survival rates over replicates."""
    settings = settings or FitSettings(phi_groups=study_phi_groups(design.T))
    jobs = [(design, settings, r) for r in range(design.replicates)]
    results = {}
    failures = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for r, res, err in pool.map(_replicate_job, jobs):
                if err:
                    failures.append({"replicate": r, "error": err})
                else:
                    results[r] = res
                if progress:
                    progress(r)
    else:
        for job in jobs:
            r, res, err = _replicate_job(job)
            if err:
                failures.append({"replicate": r, "error": err})
            else:
                results[r] = res
            if progress:
                progress(r)
    rows = aggregate(design, results)
    return StudyReport(rows=rows, failures=failures, replicates=design.replicates,
                       design=asdict(design))


def aggregate(design: StudyDesign, results: dict) -> list:
    """One row per (model, alpha, survival parameter)."""
    rows = []
    T = design.T
    for model in MODELS:
        for alpha in design.alphas:
            for t in range(1, T):
                name = f"phi_{t}"
                truth = design.phi[t - 1]
                means, widths, covered = [], [], []
                for r in sorted(results):
                    s = results[r][(model, alpha)][name]
                    means.append(s["mean"])
                    widths.append(s["upper"] - s["lower"])
                    covered.append(s["lower"] <= truth <= s["upper"])
                k = len(means)
                rows.append({
                    "model": model,
                    "alpha": float(alpha),
                    "parameter": name,
                    "truth": truth,
                    "bias": float(np.mean(means) - truth) if k else math.nan,
                    "bias_se": float(np.std(means, ddof=1) / math.sqrt(k)) if k > 1 else math.nan,
                    "width": float(np.mean(widths)) if k else math.nan,
                    "coverage": float(np.mean(covered)) if k else math.nan,
                    "replicates": k,
                    "boundary": truth in (0.0, 1.0),
                })
    return rows
