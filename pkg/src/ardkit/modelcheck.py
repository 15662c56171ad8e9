"""Posterior predictive checks, subpopulation and degree recovery reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import ArdDataset, DataValidationError, GroundTruth
from .models.base import ArdModel
from .models.start import scale_up_degree

DEFAULT_M = (0, 1, 3, 5, 10)
DECILES = np.arange(10, 100, 10)

__all__ = [
    "DEFAULT_M",
    "PpcReport",
    "RecoveryReport",
    "degree_report",
    "ppc",
    "replicate_proportions",
    "scale_up_degree",
    "subpop_recovery",
]


def _check_fingerprint(posterior, data):
    fp = getattr(posterior, "fingerprint", "")
    if fp and fp != data.fingerprint:
        raise DataValidationError(
            f"posterior was fit to dataset {fp}, but the supplied data is {data.fingerprint}"
        )


def _draws(posterior, max_draws=None):
    flat = posterior.pooled()
    if max_draws is not None and flat.shape[0] > max_draws:
        keep = np.linspace(0, flat.shape[0] - 1, max_draws).round().astype(int)
        flat = flat[keep]
    return flat


def replicate_proportions(model: ArdModel, draws, shape, m_set, seed=0) -> np.ndarray:
    """Proportion of replicated entries equal to each ``m``: array ``(S, K, len(m_set))``.

    Draw ``s`` uses its own generator seeded by ``(seed, s)``.
    """
    n, K = shape
    m_arr = np.asarray(m_set)
    out = np.empty((len(draws), K, len(m_arr)))
    for s, theta in enumerate(draws):
        rng = np.random.default_rng([seed, s])
        rep = model.replicate_draw(theta, (n, K), rng)
        out[s] = (rep[:, :, None] == m_arr).mean(axis=0)
    return out


@dataclass
class PpcReport:
    m_set: list
    observed: np.ndarray  # (K, M)
    lower: np.ndarray
    upper: np.ndarray
    seed: int = 0

    @property
    def contained(self) -> np.ndarray:
        return (self.observed >= self.lower) & (self.observed <= self.upper)

    @property
    def n_contained(self) -> int:
        return int(self.contained.sum())

    def rows(self, names=None):
        K = self.observed.shape[0]
        names = names or [str(k) for k in range(K)]
        for k in range(K):
            for j, m in enumerate(self.m_set):
                yield {
                    "subpop": names[k],
                    "m": int(m),
                    "observed": float(self.observed[k, j]),
                    "lower": float(self.lower[k, j]),
                    "upper": float(self.upper[k, j]),
                    "contained": bool(self.contained[k, j]),
                }

    def to_dict(self, names=None) -> dict:
        return {
            "m_set": [int(m) for m in self.m_set],
            "seed": self.seed,
            "n_cells": int(self.contained.size),
            "n_contained": self.n_contained,
            "cells": list(self.rows(names)),
        }


def ppc(posterior, model: ArdModel, data: ArdDataset, m_set=DEFAULT_M, seed=0, max_draws=None) -> PpcReport:
    """Compare observed ``P(y_ik = m)`` per subpopulation with 95% replicate intervals."""
    _check_fingerprint(posterior, data)
    m_set = [int(m) for m in m_set]
    draws = _draws(posterior, max_draws)
    props = replicate_proportions(model, draws, data.y.shape, m_set, seed)
    obs = (data.y[:, :, None] == np.asarray(m_set)).mean(axis=0)
    lo, hi = np.percentile(props, [2.5, 97.5], axis=0)
    return PpcReport(m_set=m_set, observed=obs, lower=lo, upper=hi, seed=seed)


@dataclass
class RecoveryReport:
    names: list
    median: np.ndarray
    q50: np.ndarray  # (K, 2)
    q90: np.ndarray
    order: np.ndarray
    truth: np.ndarray | None = None
    known: np.ndarray | None = None
    degree: dict = field(default_factory=dict)

    @property
    def contained_90(self):
        if self.truth is None:
            return None
        return _within(self.truth, self.q90[:, 0], self.q90[:, 1])

    @property
    def contained_50(self):
        if self.truth is None:
            return None
        return _within(self.truth, self.q50[:, 0], self.q50[:, 1])

    def to_dict(self) -> dict:
        rows = []
        for k in self.order:
            row = {
                "subpop": self.names[k],
                "known": None if self.known is None else bool(self.known[k]),
                "median": float(self.median[k]),
                "q50": [float(v) for v in self.q50[k]],
                "q90": [float(v) for v in self.q90[k]],
            }
            if self.truth is not None:
                row["truth"] = float(self.truth[k])
                row["in_50"] = bool(self.contained_50[k])
                row["in_90"] = bool(self.contained_90[k])
            rows.append(row)
        out = {"subpops": rows}
        if self.truth is not None:
            out["coverage_90"] = float(self.contained_90.mean())
            out["coverage_50"] = float(self.contained_50.mean())
        if self.degree:
            out["degree"] = self.degree
        return out


def _size_draws(posterior, model: ArdModel, population_n):
    return population_n * model.prevalence(posterior.pooled())


def _within(x, lo, hi):
    # relative slack so zero-width intervals at a fixed size still contain it
    tol = 1e-9 * np.maximum(np.abs(x), 1.0)
    return (x >= lo - tol) & (x <= hi + tol)


def subpop_recovery(posterior, model: ArdModel, data: ArdDataset, truth: GroundTruth | None = None) -> RecoveryReport:
    """Posterior summaries of ``N_k = N exp(beta_k)``, ordered by median size."""
    sizes = _size_draws(posterior, model, data.population_n)
    qs = np.percentile(sizes, [5, 25, 50, 75, 95], axis=0)
    median = qs[2]
    order = np.argsort(median, kind="stable")
    known = np.array([s.known for s in data.subpops])
    t = None
    if truth is not None:
        truth.check_against(data)
        t = np.asarray(truth.subpop_sizes, dtype=float)
    return RecoveryReport(
        names=data.names,
        median=median,
        q50=np.column_stack([qs[1], qs[3]]),
        q90=np.column_stack([qs[0], qs[4]]),
        order=order,
        truth=t,
        known=known,
    )


def degree_report(posterior, model: ArdModel, truth: GroundTruth | None = None) -> dict:
    """Per-respondent posterior mean degree (natural scale) and decile comparison."""
    deg = model.degrees(posterior.pooled()).mean(axis=0)
    out = {
        "posterior_mean_degree": deg.tolist(),
        "mean_degree": float(deg.mean()),
        "deciles": np.percentile(deg, DECILES).tolist(),
    }
    if truth is not None:
        true = np.asarray(truth.degrees, dtype=float)
        if true.shape != deg.shape:
            raise DataValidationError("truth degrees do not match the number of respondents")
        out["true_mean_degree"] = float(true.mean())
        out["true_deciles"] = np.percentile(true, DECILES).tolist()
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(deg - true) / true
        out["mean_relative_error"] = float(np.mean(rel[np.isfinite(rel)])) if np.any(np.isfinite(rel)) else None
    return out
