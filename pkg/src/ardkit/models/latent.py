"""Latent-space ARD model: respondents and subpopulation centres on the unit sphere."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataio import ArdDataset
from ..dists import LOG_4PI, log_x_over_sinh, sample_uniform_sphere
from .base import ArdModel, Block, Layout, masked, normal_logpdf
from .start import ridge_jitter, starting_rates

HYPER_SD = 5.0
LOG2 = np.log(2.0)


def log_kappa_factor(zeta, eta, cos_theta):
    """Log of the vMF rate multiplier ``C(zeta) C(eta) / (C(0) C(|zeta z + eta nu|))``.

    Arguments broadcast; no validation (used inside the sampler).
    """
    zeta = np.asarray(zeta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    r2 = zeta**2 + eta**2 + 2.0 * zeta * eta * np.asarray(cos_theta, dtype=float)
    r = np.sqrt(np.maximum(r2, 0.0))
    return log_x_over_sinh(zeta) + log_x_over_sinh(eta) - log_x_over_sinh(r)


def kappa_factor(zeta, eta, cos_theta):
    """Multiplicative rate adjustment for a respondent at angle ``theta`` from a centre.

    Equals 1 when either ``zeta`` or ``eta`` is 0 and increases with ``cos_theta``.
    """
    zeta = np.asarray(zeta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    cos_theta = np.asarray(cos_theta, dtype=float)
    if np.any(~np.isfinite(zeta)) or np.any(zeta < 0):
        raise ValueError("zeta must be finite and >= 0")
    if np.any(~np.isfinite(eta)) or np.any(eta < 0):
        raise ValueError("eta must be finite and >= 0")
    if np.any(np.abs(cos_theta) > 1.0 + 1e-12):
        raise ValueError("cos_theta must lie in [-1, 1]")
    out = np.exp(log_kappa_factor(zeta, eta, np.clip(cos_theta, -1.0, 1.0)))
    return out if out.ndim else float(out)


def tetrahedral_directions():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    return v / np.sqrt(3.0)


def default_anchor_directions(m: int) -> np.ndarray:
    """Tetrahedron vertices for four anchors, otherwise a Fibonacci lattice."""
    if m == 4:
        return tetrahedral_directions()
    i = np.arange(m) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / m)
    azim = np.pi * (1.0 + 5**0.5) * i
    return np.column_stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)])


def largest_known(data: ArdDataset, m: int) -> np.ndarray:
    known = data.known_idx
    order = np.argsort(-data.known_sizes, kind="stable")
    return np.sort(known[order[:m]])


@dataclass
class LatentSpace(ArdModel):
    """Poisson rates ``exp(alpha_i + beta_k) * kappa(zeta, eta_k, z_i . nu_k)``.

    ``anchor_idx`` centres are held at ``anchor_dirs`` and never updated.
    """

    anchor_idx: tuple = ()
    anchor_dirs: np.ndarray | None = None
    kind: str = field(init=False, default="latent")
    degree_name: str = field(init=False, default="alpha")

    def __post_init__(self):
        super().__post_init__()
        self.anchor_idx = tuple(int(k) for k in self.anchor_idx)
        if self.anchor_dirs is None:
            self.anchor_dirs = default_anchor_directions(len(self.anchor_idx))
        dirs = np.asarray(self.anchor_dirs, dtype=float).reshape(len(self.anchor_idx), 3)
        self.anchor_dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    def _build_layout(self):
        n, K = self.n, self.K
        return Layout(
            [
                ("alpha", (n,)),
                ("beta", (K,)),
                ("zeta", ()),
                ("eta", (K,)),
                ("z", (n, 3)),
                ("nu", (K, 3)),
                ("mu_alpha", ()),
                ("sigma_alpha", ()),
                ("mu_beta", ()),
                ("sigma_beta", ()),
            ]
        )

    def log_prior(self, theta):
        theta = self.check_params(theta)
        p = self.layout.unpack(theta)
        sa, sb, zeta, eta = p["sigma_alpha"], p["sigma_beta"], p["zeta"], p["eta"]
        if sa <= 0 or sb <= 0 or zeta <= 0 or np.any(eta <= 0):
            return -np.inf
        lp = normal_logpdf(p["alpha"], p["mu_alpha"], sa).sum()
        lp += normal_logpdf(p["beta"], p["mu_beta"], sb).sum()
        lp += normal_logpdf(sa, 0.0, HYPER_SD) + normal_logpdf(sb, 0.0, HYPER_SD) + 2 * LOG2
        lp += np.log(zeta) - zeta + np.sum(np.log(eta) - eta)
        lp += -(self.n + self.K) * LOG_4PI
        return float(lp)

    def elementwise_log_prior(self, theta, name):
        lay = self.layout
        x = lay.get(theta, name)
        if name == "alpha":
            return normal_logpdf(x, lay.get(theta, "mu_alpha"), lay.get(theta, "sigma_alpha"))
        if name == "beta":
            return normal_logpdf(x, lay.get(theta, "mu_beta"), lay.get(theta, "sigma_beta"))
        if name == "eta":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(x > 0, np.log(x) - x, -np.inf)
        if name in ("z", "nu"):
            return np.full(x.shape[:-1], -LOG_4PI)
        raise KeyError(name)

    def log_rates(self, theta):
        lay = self.layout
        z = lay.get(theta, "z")
        nu = lay.get(theta, "nu")
        cos = np.clip(z @ np.swapaxes(nu, -1, -2), -1.0, 1.0)
        zeta = np.asarray(lay.get(theta, "zeta"))[..., None, None]
        eta = lay.get(theta, "eta")[..., None, :]
        alpha = lay.get(theta, "alpha")[..., :, None]
        beta = lay.get(theta, "beta")[..., None, :]
        return alpha + beta + log_kappa_factor(zeta, eta, cos)

    def pointwise_log_likelihood(self, theta, data: ArdDataset, mask=None):
        lr = self.log_rates(theta)
        pw = data.y * lr - np.exp(lr) - data.log_factorial
        return masked(pw, mask)

    def blocks(self, data):
        y = data.y
        free = np.ones(self.K, dtype=bool)
        free[list(self.anchor_idx)] = False
        return [
            Block("alpha", "real", "row", scale=1.0 / np.sqrt(y.sum(axis=1) + 1.0)),
            Block("beta", "real", "col", scale=1.0 / np.sqrt(y.sum(axis=0) + 1.0)),
            Block("z", "sphere", "row", scale=0.3),
            Block("nu", "sphere", "col", active=free, scale=0.1),
            Block("eta", "positive", "col", scale=0.2),
            Block("zeta", "positive", "global", scale=0.05),
            Block("mu_alpha", "real", "global", likelihood=False, scale=0.1),
            Block("sigma_alpha", "positive", "global", likelihood=False, scale=0.1),
            Block("mu_beta", "real", "global", likelihood=False, scale=0.3),
            Block("sigma_beta", "positive", "global", likelihood=False, scale=0.2),
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
        alpha, beta = ridge_jitter(log_d, beta, rng, self.init_jitter)
        z = sample_uniform_sphere(rng, self.n)
        nu = sample_uniform_sphere(rng, self.K)
        nu[list(self.anchor_idx)] = self.anchor_dirs
        zeta, eta = 1.0, np.ones(self.K)
        # absorb the average kappa multiplier into beta so starting rates match the data
        beta = beta - log_kappa_factor(zeta, eta[None, :], z @ nu.T).mean(axis=0)
        return self.layout.pack(
            {
                "alpha": alpha,
                "beta": beta,
                "zeta": zeta,
                "eta": eta,
                "z": z,
                "nu": nu,
                "mu_alpha": alpha.mean(),
                "sigma_alpha": max(alpha.std(), 0.1),
                "mu_beta": beta.mean(),
                "sigma_beta": max(beta.std(), 0.1),
            }
        )
