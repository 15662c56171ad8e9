"""Densities and random draws for the distributions used by the ARD models.

Everything is evaluated in log space with ``gammaln``/``betaln`` so counts in
the tens of thousands do not overflow. The negative binomial is parameterized
by its mean ``mu`` and variance inflation ``omega`` (``Var = omega * mu``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

LOG_4PI = math.log(4.0 * math.pi)


@dataclass(frozen=True)
class NegBinMuOmega:
    """Negative binomial with mean ``mu`` and overdispersion ``omega >= 1``."""

    mu: float
    omega: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be positive and finite, got {self.mu}")
        if not (np.isfinite(self.omega) and self.omega >= 1):
            raise ValueError(f"omega must be >= 1 and finite, got {self.omega}")

    @property
    def shape(self) -> float:
        """Internal size ``r = mu / (omega - 1)``; infinite in the Poisson limit."""
        if self.omega == 1:
            return math.inf
        return self.mu / (self.omega - 1.0)

    @property
    def prob(self) -> float:
        return 1.0 / self.omega

    def mean(self) -> float:
        return self.mu

    def var(self) -> float:
        return self.omega * self.mu


@dataclass(frozen=True)
class VmfParams:
    """von Mises-Fisher on the unit sphere in three dimensions."""

    mean_dir: tuple
    kappa: float

    def __post_init__(self):
        v = np.asarray(self.mean_dir, dtype=float)
        if v.shape != (3,):
            raise ValueError("mean_dir must be a 3-vector")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("mean_dir must have unit norm")
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")


# ---------------------------------------------------------------------------
# von Mises-Fisher normalizing constant (3-D)


def log_x_over_sinh(x):
    """Stable ``log(x / sinh(x))`` for ``x >= 0``; equals 0 at ``x = 0``."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x < 1e-3
    xs = x[small]
    out[small] = -xs**2 / 6.0 + xs**4 / 180.0
    xl = x[~small]
    out[~small] = np.log(2.0 * xl) - xl - np.log1p(-np.exp(-2.0 * xl))
    return out if out.ndim else float(out)


def _check_kappa(kappa):
    k = np.asarray(kappa, dtype=float)
    if not np.all(np.isfinite(k)) or np.any(k < 0):
        raise ValueError("concentration must be finite and non-negative")
    return k


def log_vmf_norm_const(kappa):
    """Log of ``C_3(kappa) = kappa / (4 pi sinh kappa)``."""
    k = _check_kappa(kappa)
    return log_x_over_sinh(k) - LOG_4PI


def vmf_norm_const(kappa):
    """Normalizing constant of the 3-D von Mises-Fisher density.

    Continuous at zero, where it equals ``1 / (4 pi)``; evaluated through
    ``log_x_over_sinh`` so large concentrations do not overflow ``sinh``.
    """
    return np.exp(log_vmf_norm_const(kappa))


# ---------------------------------------------------------------------------
# log-pmfs


def poisson_logpmf(y, rate):
    y = np.asarray(y, dtype=float)
    rate = np.asarray(rate, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(y == 0, -rate, y * np.log(rate) - rate - gammaln(y + 1.0))
    return out


def negbin_logpmf(y, mu, omega):
    """Log pmf of the (mu, omega) negative binomial, vectorized.

    Entries with ``omega == 1`` are dispatched to the Poisson pmf.
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(omega))):
        raise ValueError("negbin_logpmf received non-finite input")
    if np.any(omega < 1) or np.any(mu <= 0) or np.any(y < 0):
        raise ValueError("negbin_logpmf needs y >= 0, mu > 0, omega >= 1")
    out = negbin_kernel(y, mu, omega)
    return out if out.ndim else float(out)


_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188)
_STIRLING_MIN = 30.0


def _stirling_tail(x):
    inv = 1.0 / x
    inv2 = inv * inv
    acc = np.zeros_like(x)
    for c in reversed(_STIRLING):
        acc = acc * inv2 + c
    return acc * inv


def log_rising(r, y):
    """``log Gamma(r + y) - log Gamma(r)`` without cancellation when ``r`` is large."""
    r, y = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(y, dtype=float))
    big = r >= _STIRLING_MIN
    rb = np.where(big, r, _STIRLING_MIN)
    stirling = (
        (rb - 0.5) * np.log1p(y / rb)
        + y * np.log(rb + y)
        - y
        + _stirling_tail(rb + y)
        - _stirling_tail(rb)
    )
    with np.errstate(invalid="ignore"):
        small = gammaln(r + y) - gammaln(r)
    return np.where(big, stirling, small)


def negbin_kernel(y, mu, omega):
    """Unchecked negative binomial log pmf (arrays in, array out)."""
    y, mu, omega = np.broadcast_arrays(y, mu, omega)
    poisson = omega == 1.0
    delta = np.where(poisson, 1.0, omega - 1.0)
    r = mu / delta
    lg_ratio = log_rising(r, y)
    # r * log(1/omega) = -mu * log1p(delta) / delta
    r_logp = -mu * np.log1p(delta) / delta
    with np.errstate(divide="ignore", invalid="ignore"):
        y_logq = np.where(y > 0, y * (np.log(delta) - np.log1p(delta)), 0.0)
    out = lg_ratio - gammaln(y + 1.0) + r_logp + y_logq
    if np.any(poisson):
        out = np.where(poisson, poisson_logpmf(y, mu), out)
    return out


def betabinom_logpmf(y, d, a, b):
    """Log pmf of the beta-binomial: Binomial(d, q) with q ~ Beta(a, b)."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("beta-binomial shapes must be positive")
    if np.any(y > d) or np.any(y < 0):
        raise ValueError("beta-binomial requires 0 <= y <= d")
    out = betabinom_kernel(y, d, a, b)
    return out if out.ndim else float(out)


def betabinom_kernel(y, d, a, b):
    """Unchecked beta-binomial log pmf; ``-inf`` where ``y > d``."""
    y, d, a, b = np.broadcast_arrays(y, d, a, b)
    ok = y <= d
    dd = np.where(ok, d, y)
    out = (
        gammaln(dd + 1.0)
        - gammaln(y + 1.0)
        - gammaln(dd - y + 1.0)
        + betaln(y + a, dd - y + b)
        - betaln(a, b)
    )
    return np.where(ok, out, -np.inf)


# ---------------------------------------------------------------------------
# samplers


def sample_vmf(params: VmfParams, rng: np.random.Generator, size: int | None = None):
    """Draw from the 3-D von Mises-Fisher by inverting the cosine CDF.

    The cosine toward the mean is ``w = 1 + log(u + (1 - u) exp(-2 kappa)) / kappa``;
    the azimuth is uniform. ``kappa = 0`` gives the uniform distribution.
    """
    mu = np.asarray(params.mean_dir, dtype=float)
    kappa = float(params.kappa)
    m = 1 if size is None else int(size)
    u = rng.random(m)
    if kappa == 0:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi, m)
    e1, e2 = _orthonormal_complement(mu)
    s = np.sqrt(1.0 - w**2)
    v = w[:, None] * mu + s[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v[0] if size is None else v


def sample_uniform_sphere(rng: np.random.Generator, size: int):
    v = rng.standard_normal((size, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _orthonormal_complement(mu):
    a = np.array([1.0, 0.0, 0.0]) if abs(mu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - mu * (a @ mu)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(mu, e1)
    return e1, e2


def _require(cond, msg):
    if not np.all(cond):
        raise ValueError(msg)


def sample_poisson(rate, rng: np.random.Generator, size=None):
    rate = np.asarray(rate, dtype=float)
    _require(np.isfinite(rate) & (rate >= 0), "Poisson rate must be finite and >= 0")
    return rng.poisson(rate, size)


def sample_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Gamma with shape/rate parameterization (mean ``shape / rate``)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    _require((shape > 0) & (rate > 0), "Gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size)


def sample_beta(a, b, rng: np.random.Generator, size=None):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _require((a > 0) & (b > 0), "Beta shapes must be positive")
    return rng.beta(a, b, size)


def sample_lognormal(logmean, logsd, rng: np.random.Generator, size=None):
    logsd = np.asarray(logsd, dtype=float)
    _require(logsd >= 0, "log-normal sd must be non-negative")
    return rng.lognormal(logmean, logsd, size)


def sample_binomial(trials, prob, rng: np.random.Generator, size=None):
    trials = np.asarray(trials)
    prob = np.asarray(prob, dtype=float)
    _require(trials >= 0, "Binomial trials must be non-negative")
    _require((prob >= 0) & (prob <= 1), "Binomial probability must lie in [0, 1]")
    return rng.binomial(trials, prob, size)


def sample_negbin(mu, omega, rng: np.random.Generator, size=None):
    """Draws from the (mu, omega) negative binomial; ``omega == 1`` is Poisson."""
    mu = np.asarray(mu, dtype=float)
    omega = np.asarray(omega, dtype=float)
    _require(np.isfinite(mu) & (mu >= 0), "negative binomial mean must be finite and >= 0")
    _require(omega >= 1, "overdispersion must be >= 1")
    mu, omega = np.broadcast_arrays(mu, omega)
    poisson = omega == 1.0
    delta = np.where(poisson, 1.0, omega - 1.0)
    # Gamma-Poisson mixture; zero means stay at zero
    g = rng.gamma(np.where(mu > 0, mu / delta, 1.0), delta, size)
    g = np.where(poisson, mu, np.where(mu > 0, g, 0.0))
    return rng.poisson(g)
