"""Null models with Poisson likelihood: common degree (Erdos-Renyi) and varying degree."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataio import ArdDataset
from .base import ArdModel, Block, Layout, masked, normal_logpdf
from .start import ridge_jitter, starting_rates

LOG_D_SD = 25.0
BETA_SD = 5.0


@dataclass
class ErdosRenyi(ArdModel):
    """``y_ik ~ Poisson(exp(log_d + beta_k))`` with a degree shared by all respondents."""

    kind: str = field(init=False, default="er")
    degree_name: str = field(init=False, default="log_d")

    def _build_layout(self):
        return Layout([("log_d", ()), ("beta", (self.K,))])

    def log_rates(self, theta):
        lay = self.layout
        log_d = np.asarray(lay.get(theta, self.degree_name))
        if log_d.ndim == theta.ndim - 1:
            log_d = np.broadcast_to(log_d[..., None], theta.shape[:-1] + (self.n,))
        return log_d[..., :, None] + lay.get(theta, "beta")[..., None, :]

    def log_prior(self, theta):
        theta = self.check_params(theta)
        lay = self.layout
        return float(
            normal_logpdf(lay.get(theta, self.degree_name), 0.0, LOG_D_SD).sum()
            + normal_logpdf(lay.get(theta, "beta"), 0.0, BETA_SD).sum()
        )

    def elementwise_log_prior(self, theta, name):
        sd = BETA_SD if name == "beta" else LOG_D_SD
        return normal_logpdf(self.layout.get(theta, name), 0.0, sd)

    def pointwise_log_likelihood(self, theta, data: ArdDataset, mask=None):
        lr = self.log_rates(theta)
        rate = np.exp(lr)
        pw = data.y * lr - rate - data.log_factorial
        return masked(pw, mask)

    def blocks(self, data):
        y = data.y
        return [
            Block("log_d", "real", "global", scale=1.0 / np.sqrt(y.sum() + 1.0)),
            Block("beta", "real", "col", scale=1.0 / np.sqrt(y.sum(axis=0) + 1.0)),
        ]

    def replicate_draw(self, theta, shape, rng):
        with np.errstate(under="ignore"):
            rate = np.exp(self.log_rates(theta))
        if rate.shape != tuple(shape):
            raise ValueError(f"parameters imply shape {rate.shape}, requested {tuple(shape)}")
        if not np.all(np.isfinite(rate)):
            raise FloatingPointError("non-finite Poisson rate in replicate draw")
        return rng.poisson(rate)

    def initial_params(self, data: ArdDataset, rng, mask=None):
        log_d, beta = starting_rates(data, mask)
        common = np.log(np.exp(log_d).mean())
        log_d, beta = ridge_jitter(np.array([common]), beta, rng, self.init_jitter)
        return self.layout.pack({"log_d": log_d[0], "beta": beta})


@dataclass
class VaryingDegree(ErdosRenyi):
    """``y_ik ~ Poisson(exp(log_d_i + beta_k))`` with one degree per respondent."""

    kind: str = field(init=False, default="vd")

    def _build_layout(self):
        return Layout([("log_d", (self.n,)), ("beta", (self.K,))])

    def blocks(self, data):
        y = data.y
        return [
            Block("log_d", "real", "row", scale=1.0 / np.sqrt(y.sum(axis=1) + 1.0)),
            Block("beta", "real", "col", scale=1.0 / np.sqrt(y.sum(axis=0) + 1.0)),
        ]

    def initial_params(self, data: ArdDataset, rng, mask=None):
        log_d, beta = starting_rates(data, mask)
        log_d, beta = ridge_jitter(log_d, beta, rng, self.init_jitter)
        return self.layout.pack({"log_d": log_d, "beta": beta})
