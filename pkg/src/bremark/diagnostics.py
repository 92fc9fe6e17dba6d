"""Chain diagnostics: autocorrelation, effective sample size, summaries."""

from __future__ import annotations

import numpy as np


def autocorrelation(chain) -> np.ndarray:
    """Normalised autocorrelation at every lag, computed with an FFT."""
    x = np.asarray(chain, dtype=float)
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n]
    if acov[0] <= 0.0:
        return np.ones(n)
    return acov / acov[0]


def effective_sample_size(chain) -> float:
    """ESS from the initial monotone positive sequence of paired autocorrelations.

    A constant chain carries no autocorrelation information and is given
    ESS equal to its length.
    """
    x = np.asarray(chain, dtype=float)
    n = len(x)
    if n < 4 or np.ptp(x) == 0.0:
        return float(n)
    rho = autocorrelation(x)
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    tau = -1.0
    prev = np.inf
    for g in pairs:
        if g <= 0.0:
            break
        g = min(g, prev)
        tau += 2.0 * g
        prev = g
    tau = max(tau, 1.0 / np.log10(n))  # guard against antithetic chains
    return float(n / tau)


def summarize(draws, names=None, level: float = 0.95) -> dict[str, dict[str, float]]:
    """Posterior mean, central interval and ESS per column of ``draws``."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if draws.shape[0] == 0:
        raise ValueError("no draws to summarise")
    if names is None:
        names = [f"v{i}" for i in range(draws.shape[1])]
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    out = {}
    for name, col in zip(names, draws.T):
        lo, hi = np.quantile(col, [lo_q, hi_q])
        out[name] = {
            "mean": float(col.mean()),
            "lower": float(lo),
            "upper": float(hi),
            "ess": effective_sample_size(col),
        }
    return out
