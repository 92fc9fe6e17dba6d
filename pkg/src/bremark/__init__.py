"""Bayesian mark-recapture inference under band-read errors.

Latent error histories are sampled over the fibre of configurations that
reproduce the observed counts, using dynamic Markov-basis moves.
"""

from .constraints import ConstraintSystem, build_constraints, extend_counts, in_fibre, zero_error_config
from .histories import HistoryUniverse, StudyShape, enumerate_universe
from .kernels import BACKEND
from .model import CaptureParams, ErrorParam, log_joint
from .sampler import ObservedData, SamplerConfig, posterior_summary, run

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CaptureParams",
    "ConstraintSystem",
    "ErrorParam",
    "HistoryUniverse",
    "ObservedData",
    "SamplerConfig",
    "StudyShape",
    "build_constraints",
    "enumerate_universe",
    "extend_counts",
    "in_fibre",
    "log_joint",
    "posterior_summary",
    "run",
    "zero_error_config",
]
