"""Data-informed starting values shared by the models."""

from __future__ import annotations

import numpy as np

from ..dataio import ArdDataset


def scale_up_degree(data: ArdDataset, mask=None) -> np.ndarray:
    """Killworth scale-up estimate ``N * sum_known y_ik / sum_known N_k`` per respondent.

    With a mask, only unmasked known entries enter both sums.
    """
    known = data.known_idx
    y = data.y[:, known].astype(float)
    sizes = np.broadcast_to(data.known_sizes, y.shape)
    if mask is not None:
        keep = ~np.asarray(mask)[:, known]
        y = np.where(keep, y, 0.0)
        sizes = np.where(keep, sizes, 0.0)
    denom = sizes.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        est = data.population_n * y.sum(axis=1) / denom
    return np.where(denom > 0, est, 0.0)


def starting_rates(data: ArdDataset, mask=None):
    """Log-degrees from the scale-up estimate (floored at 1) and matching log-prevalences."""
    d = np.maximum(scale_up_degree(data, mask), 1.0)
    y = data.y.astype(float)
    obs = np.ones_like(y) if mask is None else (~np.asarray(mask)).astype(float)
    col_n = np.maximum(obs.sum(axis=0), 1.0)
    col_mean = (y * obs).sum(axis=0) / col_n
    floor = 1.0 / data.population_n
    with np.errstate(divide="ignore"):
        beta = np.where(col_mean > 0, np.log(col_mean / d.mean()), np.log(floor))
    return np.log(d), beta


def ridge_jitter(log_d, beta, rng, scale=1.0):
    """Perturb a start along the unidentified degree/prevalence ridge plus small noise.

    Chains then begin at different points of the ridge, which is what makes
    non-convergence of unrescaled chains visible.
    """
    if scale == 0:
        return np.array(log_d, dtype=float), np.array(beta, dtype=float)
    c = rng.normal(0.0, scale)
    log_d = log_d + c + rng.normal(0.0, 0.1 * scale, np.shape(log_d))
    beta = beta - c + rng.normal(0.0, 0.1 * scale, np.shape(beta))
    return log_d, beta
