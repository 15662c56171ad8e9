"""Overdispersed (negative binomial) model with hierarchical respondent and group effects."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataio import ArdDataset
from ..dists import negbin_kernel, sample_negbin
from .base import ArdModel, Block, Layout, masked, normal_logpdf
from .start import ridge_jitter, starting_rates

SIGMA_ALPHA_SD = 5.0
LOG2 = np.log(2.0)


def moment_overdispersion(data: ArdDataset, log_d, beta, mask=None, lo=1.05, hi=50.0):
    """Per-column variance-to-mean ratio around the fitted rates, clipped to ``(lo, hi)``."""
    mu = np.exp(log_d[:, None] + beta[None, :])
    obs = np.ones(data.y.shape) if mask is None else (~np.asarray(mask)).astype(float)
    resid2 = obs * (data.y - mu) ** 2
    ratio = resid2.sum(axis=0) / np.maximum((obs * mu).sum(axis=0), 1e-12)
    return np.clip(ratio, lo, hi)


@dataclass
class Overdispersed(ArdModel):
    """``y_ik ~ NegBin(mean exp(alpha_i + beta_k), overdispersion omega_k)``.

    The sampled parameter is ``inv_omega = 1/omega`` with a flat prior on (0, 1).
    ``alpha_i ~ N(0, sigma_alpha)``, ``beta_k ~ N(mu_beta, sigma_beta)``,
    ``sigma_alpha`` half-normal(5), ``mu_beta`` and ``sigma_beta`` flat.
    """

    kind: str = field(init=False, default="od")
    degree_name: str = field(init=False, default="alpha")

    def _build_layout(self):
        return Layout(
            [
                ("alpha", (self.n,)),
                ("beta", (self.K,)),
                ("inv_omega", (self.K,)),
                ("mu_beta", ()),
                ("sigma_alpha", ()),
                ("sigma_beta", ()),
            ]
        )

    def log_prior(self, theta):
        theta = self.check_params(theta)
        p = self.layout.unpack(theta)
        sa, sb, iw = p["sigma_alpha"], p["sigma_beta"], p["inv_omega"]
        if sa <= 0 or sb <= 0 or np.any(iw <= 0) or np.any(iw >= 1):
            return -np.inf
        lp = normal_logpdf(p["alpha"], 0.0, sa).sum()
        lp += normal_logpdf(p["beta"], p["mu_beta"], sb).sum()
        lp += normal_logpdf(sa, 0.0, SIGMA_ALPHA_SD) + LOG2
        return float(lp)

    def elementwise_log_prior(self, theta, name):
        lay = self.layout
        x = lay.get(theta, name)
        if name == "alpha":
            return normal_logpdf(x, 0.0, lay.get(theta, "sigma_alpha"))
        if name == "beta":
            return normal_logpdf(x, lay.get(theta, "mu_beta"), lay.get(theta, "sigma_beta"))
        if name == "inv_omega":
            return np.where((x > 0) & (x < 1), 0.0, -np.inf)
        raise KeyError(name)

    def mean_and_omega(self, theta):
        lay = self.layout
        mu = np.exp(lay.get(theta, "alpha")[..., :, None] + lay.get(theta, "beta")[..., None, :])
        omega = 1.0 / lay.get(theta, "inv_omega")
        return mu, np.broadcast_to(omega[..., None, :], mu.shape)

    def pointwise_log_likelihood(self, theta, data: ArdDataset, mask=None):
        mu, omega = self.mean_and_omega(theta)
        pw = negbin_kernel(data.y, mu, omega)
        return masked(pw, mask)

    def blocks(self, data):
        y = data.y
        return [
            Block("alpha", "real", "row", scale=1.0 / np.sqrt(y.sum(axis=1) + 1.0)),
            Block("beta", "real", "col", scale=1.0 / np.sqrt(y.sum(axis=0) + 1.0)),
            Block("inv_omega", "unit", "col", scale=0.3),
            Block("mu_beta", "real", "global", likelihood=False, scale=0.3),
            Block("sigma_alpha", "positive", "global", likelihood=False, scale=0.1),
            Block("sigma_beta", "positive", "global", likelihood=False, scale=0.2),
        ]

    def replicate_draw(self, theta, shape, rng):
        with np.errstate(under="ignore"):
            mu, omega = self.mean_and_omega(theta)
        if mu.shape != tuple(shape):
            raise ValueError(f"parameters imply shape {mu.shape}, requested {tuple(shape)}")
        if not np.all(np.isfinite(mu)):
            raise FloatingPointError("non-finite mean in replicate draw")
        return sample_negbin(mu, omega, rng)

    def initial_params(self, data: ArdDataset, rng, mask=None):
        log_d, beta = starting_rates(data, mask)
        omega = moment_overdispersion(data, log_d, beta, mask)
        # the alpha prior is centred at zero, so start where mean(alpha) = 0
        shift = log_d.mean()
        alpha, beta = ridge_jitter(log_d - shift, beta + shift, rng, self.init_jitter)
        return self.layout.pack(
            {
                "alpha": alpha,
                "beta": beta,
                "inv_omega": 1.0 / omega,
                "mu_beta": beta.mean(),
                "sigma_alpha": max(alpha.std(), 0.1),
                "sigma_beta": max(beta.std(), 0.1),
            }
        )
