"""Bayesian models for aggregated relational data (ARD).

Simulate ARD from network generators, fit five ARD models with an adaptive
Metropolis-within-Gibbs sampler, and check the fits with convergence
diagnostics, posterior predictive checks, recovery reports and entry-wise
cross-validation.
"""

__version__ = "0.1.0"

from .dataio import ArdDataset, GroundTruth, SubpopMeta, load_dataset, save_dataset  # noqa: E402
from .models import RescaleSpec, make_model  # noqa: E402
from .sampler import Posterior, SamplerConfig, run_chain, run_chains  # noqa: E402

__all__ = [
    "ArdDataset",
    "GroundTruth",
    "Posterior",
    "RescaleSpec",
    "SamplerConfig",
    "SubpopMeta",
    "load_dataset",
    "make_model",
    "run_chain",
    "run_chains",
    "save_dataset",
]
