"""Barrier-effects model fitted through its beta-binomial marginal.

Respondent ``i`` has integer degree ``d_i``; ties to subpopulation ``k`` occur
with probability ``q_ik ~ Beta`` with mean ``m_k`` and dispersion ``rho_k``, and
``y_ik ~ Binomial(d_i, q_ik)``. Integrating ``q_ik`` out leaves a beta-binomial
per entry, so no per-entry latent variables are sampled. Known subpopulations
have ``m_k = N_k / N`` fixed; only the unknown prevalences are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataio import ArdDataset
from ..dists import betabinom_kernel, negbin_kernel
from .base import ArdModel, Block, Layout, masked
from .start import scale_up_degree


def beta_shapes(m, rho):
    """Beta shapes with mean ``m`` and intra-class correlation ``rho``."""
    scale = (1.0 - rho) / rho
    return m * scale, (1.0 - m) * scale


@dataclass
class BarrierEffects(ArdModel):
    """Beta-binomial ARD model with integer degrees.

    Priors: ``d_i`` negative binomial with mean ``degree_prior_mean`` and
    overdispersion ``degree_prior_omega`` (truncated to ``[max_k y_ik, max_degree]``),
    uniform(0, 1) on free ``m_k`` and on every ``rho_k``.
    """

    known_prev: np.ndarray | None = None
    max_y: np.ndarray | None = None
    max_degree: int = 20000
    degree_prior_mean: float = 1000.0
    degree_prior_omega: float = 1000.0
    kind: str = field(init=False, default="barrier")

    def __post_init__(self):
        super().__post_init__()
        kp = np.full(self.K, np.nan) if self.known_prev is None else np.asarray(self.known_prev, float)
        self.known_prev = kp
        self.max_y = np.zeros(self.n) if self.max_y is None else np.asarray(self.max_y, float)

    @classmethod
    def for_data(cls, data: ArdDataset, **kwargs):
        kp = np.full(data.K, np.nan)
        kp[data.known_idx] = data.known_sizes / data.population_n
        return cls(data.n, data.K, known_prev=kp, max_y=data.y.max(axis=1), **kwargs)

    @property
    def free_m(self):
        return np.isnan(self.known_prev)

    def _build_layout(self):
        return Layout([("d", (self.n,)), ("m", (self.K,)), ("rho", (self.K,))])

    def rescale(self, theta, spec):
        # m_k are already prevalences
        return self.check_params(theta).copy()

    def degrees(self, theta):
        return np.asarray(self.layout.get(theta, "d"), dtype=float)

    def log_prevalence(self, theta):
        with np.errstate(divide="ignore"):
            return np.log(self.layout.get(theta, "m"))

    def prevalence(self, theta):
        return np.array(self.layout.get(theta, "m"))

    def _degree_prior(self, d):
        ok = (d >= self.max_y) & (d <= self.max_degree) & (d == np.round(d))
        lp = negbin_kernel(np.maximum(d, 0.0), self.degree_prior_mean, self.degree_prior_omega)
        return np.where(ok, lp, -np.inf)

    def log_prior(self, theta):
        theta = self.check_params(theta)
        p = self.layout.unpack(theta)
        m, rho = p["m"], p["rho"]
        if np.any((m <= 0) | (m >= 1)) or np.any((rho <= 0) | (rho >= 1)):
            return -np.inf
        known = ~self.free_m
        if not np.allclose(m[known], self.known_prev[known]):
            return -np.inf
        return float(self._degree_prior(p["d"]).sum())

    def elementwise_log_prior(self, theta, name):
        x = self.layout.get(theta, name)
        if name == "d":
            return self._degree_prior(x)
        if name in ("m", "rho"):
            return np.where((x > 0) & (x < 1), 0.0, -np.inf)
        raise KeyError(name)

    def pointwise_log_likelihood(self, theta, data: ArdDataset, mask=None):
        lay = self.layout
        d = lay.get(theta, "d")[..., :, None]
        a, b = beta_shapes(lay.get(theta, "m"), lay.get(theta, "rho"))
        pw = betabinom_kernel(data.y, d, a[..., None, :], b[..., None, :])
        return masked(pw, mask)

    def blocks(self, data):
        d0 = np.maximum(scale_up_degree(data), 1.0)
        return [
            Block("d", "integer", "row", scale=np.sqrt(d0)),
            Block("m", "unit", "col", active=self.free_m.copy(), scale=0.2),
            Block("rho", "unit", "col", scale=0.3),
        ]

    def replicate_draw(self, theta, shape, rng):
        lay = self.layout
        d = np.asarray(lay.get(theta, "d")).astype(np.int64)
        a, b = beta_shapes(lay.get(theta, "m"), lay.get(theta, "rho"))
        n, K = shape
        if d.shape != (n,) or a.shape != (K,):
            raise ValueError(f"parameters do not match requested shape {tuple(shape)}")
        q = rng.beta(np.broadcast_to(a, (n, K)), np.broadcast_to(b, (n, K)))
        return rng.binomial(np.broadcast_to(d[:, None], (n, K)), q)

    def initial_params(self, data: ArdDataset, rng, mask=None):
        d = np.maximum(np.round(scale_up_degree(data, mask)), data.y.max(axis=1))
        d = np.clip(np.maximum(d, 1.0), None, self.max_degree)
        if self.init_jitter:
            d = np.maximum(np.round(d * np.exp(rng.normal(0.0, 0.1 * self.init_jitter, self.n))), data.y.max(axis=1))
        col_mean = data.y.mean(axis=0)
        m = np.where(self.free_m, np.clip(col_mean / d.mean(), 1e-6, 0.5), self.known_prev)
        rho = np.full(self.K, 0.05)
        return self.layout.pack({"d": d, "m": m, "rho": rho})
