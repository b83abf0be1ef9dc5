"""Sparse Bayesian shrinkage estimation for gamma-distributed observations.

A library and CLI for estimating a sequence of positive means from gamma
observations under global-local shrinkage priors (scaled beta and inverse
rescaled beta local mixtures over a shape-scale inverse-gamma hierarchy),
with a Metropolis-within-Gibbs sampler, a deterministic quadrature oracle
for validation, and a simulation harness.
"""

from .model_core import (
    FixedValue,
    GammaPrior,
    Observation,
    PriorSpec,
    TailIndices,
)
from .mcmc import ChainOutput, McmcConfig, PosteriorSummary, run_chain, summarize
from .quad_oracle import QuadConfig
from .rand_dist import GigParams, RngHandle

__version__ = "0.1.0"

__all__ = [
    "ChainOutput",
    "FixedValue",
    "GammaPrior",
    "GigParams",
    "McmcConfig",
    "Observation",
    "PosteriorSummary",
    "PriorSpec",
    "QuadConfig",
    "RngHandle",
    "TailIndices",
    "run_chain",
    "summarize",
    "__version__",
]
