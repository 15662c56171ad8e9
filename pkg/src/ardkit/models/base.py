"""Parameter layouts, update blocks, and the rescaling transform shared by all models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ..dataio import ArdDataset, DataValidationError

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def normal_logpdf(x, mu, sd):
    z = (np.asarray(x, dtype=float) - mu) / sd
    return -0.5 * z * z - np.log(sd) - HALF_LOG_2PI


class Layout:
    """Named slices into a flat parameter vector.

    >>> lay = Layout([("log_d", ()), ("beta", (3,))])
    >>> lay.size
    4
    """

    def __init__(self, entries):
        self.shapes = {}
        self.slices = {}
        pos = 0
        for name, shape in entries:
            shape = tuple(shape)
            size = int(np.prod(shape)) if shape else 1
            self.shapes[name] = shape
            self.slices[name] = slice(pos, pos + size)
            pos += size
        self.size = pos

    def __contains__(self, name):
        return name in self.slices

    @property
    def names(self):
        return list(self.slices)

    def get(self, theta, name):
        """A view of ``name`` inside ``theta`` (writable when ``theta`` is)."""
        v = theta[..., self.slices[name]]
        shape = self.shapes[name]
        if not shape:
            return v[..., 0]
        return v.reshape(theta.shape[:-1] + shape)

    def set(self, theta, name, value):
        theta[..., self.slices[name]] = np.reshape(value, theta.shape[:-1] + (-1,))

    def pack(self, values: dict) -> np.ndarray:
        missing = set(self.slices) - set(values)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        theta = np.empty(self.size)
        for name in self.slices:
            self.set(theta, name, np.asarray(values[name], dtype=float))
        return theta

    def unpack(self, theta) -> dict:
        return {name: np.array(self.get(theta, name)) for name in self.slices}

    def flat_names(self) -> list[str]:
        """One label per scalar slot, e.g. ``beta[2]`` or ``z[4,1]``."""
        out = []
        for name, shape in self.shapes.items():
            if not shape:
                out.append(name)
            else:
                for idx in np.ndindex(*shape):
                    out.append(f"{name}[{','.join(str(i) for i in idx)}]")
        return out

    def index_of(self, label: str) -> int:
        try:
            return self.flat_names().index(label)
        except ValueError:
            raise KeyError(f"unknown parameter {label!r}") from None


@dataclass
class Block:
    """A Metropolis update unit.

    ``axis`` says how elements factorize: ``"row"`` elements are conditionally
    independent across respondents, ``"col"`` across subpopulations, and a
    ``"global"`` block is a single scalar. ``kind`` picks the proposal:
    ``real`` (Gaussian walk), ``positive`` (log-scale walk), ``unit``
    (logit-scale walk), ``sphere`` (tangent step and renormalize) or
    ``integer`` (signed geometric jump).
    """

    name: str
    kind: str
    axis: str
    likelihood: bool = True
    active: np.ndarray | None = None
    scale: np.ndarray | float = 1.0


@dataclass
class RescaleSpec:
    """Known subpopulations anchoring the degree/prevalence scale."""

    idx: np.ndarray
    known_prev: float

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=int)
        if self.idx.size == 0:
            raise DataValidationError("rescaling needs at least one known subpopulation")
        if not (0 < self.known_prev < 1):
            raise DataValidationError("known_prev must lie in (0, 1)")

    @classmethod
    def from_data(cls, data: ArdDataset, idx=None) -> "RescaleSpec":
        known = set(data.known_idx.tolist())
        idx = data.known_idx if idx is None else np.asarray(idx, dtype=int)
        if not set(idx.tolist()) <= known:
            raise DataValidationError("rescale indices must all refer to known subpopulations")
        sizes = np.array([data.subpops[k].known_size for k in idx], dtype=float)
        return cls(idx=idx, known_prev=float(sizes.sum() / data.population_n))


def rescale_constant(beta, spec: RescaleSpec):
    """``C = log(sum_{k in idx} exp(beta_k) / known_prev)``; works on stacked draws."""
    beta = np.asarray(beta, dtype=float)
    return logsumexp(beta[..., spec.idx], axis=-1) - np.log(spec.known_prev)


@dataclass
class ArdModel:
    """Base class for the fittable ARD models.

    Subclasses define ``layout``, priors, the pointwise likelihood, update
    blocks, replication, and starting values. ``degree_name`` is the
    log-degree component shifted by rescaling (``None`` disables rescaling).
    """

    n: int
    K: int
    kind: str = field(init=False, default="base")
    degree_name: str | None = field(init=False, default=None)
    init_jitter: float = 1.0

    def __post_init__(self):
        self.layout = self._build_layout()

    # -- interface --------------------------------------------------------
    def _build_layout(self) -> Layout:
        raise NotImplementedError

    def log_prior(self, theta) -> float:
        raise NotImplementedError

    def elementwise_log_prior(self, theta, name) -> np.ndarray:
        raise NotImplementedError

    def pointwise_log_likelihood(self, theta, data: ArdDataset, mask=None) -> np.ndarray:
        raise NotImplementedError

    def blocks(self, data: ArdDataset | None) -> list[Block]:
        raise NotImplementedError

    def replicate_draw(self, theta, shape, rng) -> np.ndarray:
        raise NotImplementedError

    def initial_params(self, data: ArdDataset, rng, mask=None) -> np.ndarray:
        raise NotImplementedError

    def degrees(self, theta) -> np.ndarray:
        """Per-respondent degree implied by (rescaled) parameters; shape ``(..., n)``."""
        d = np.exp(self.layout.get(theta, self.degree_name))
        if d.ndim == theta.ndim - 1:  # common degree
            d = np.repeat(d[..., None], self.n, axis=-1)
        return d

    def log_prevalence(self, theta) -> np.ndarray:
        return self.layout.get(theta, "beta")

    def prevalence(self, theta) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_prevalence(theta))

    # -- shared behaviour -------------------------------------------------
    def log_likelihood(self, theta, data: ArdDataset, mask=None) -> float:
        pw = self.pointwise_log_likelihood(theta, data, mask)
        total = float(pw.sum())
        if not np.isfinite(total):
            bad = np.argwhere(~np.isfinite(pw))
            if bad.size and np.any(np.isnan(pw)):
                i, k = bad[0]
                raise FloatingPointError(f"non-finite log-likelihood at entry ({i}, {k})")
        return total

    def log_posterior(self, theta, data, mask=None) -> float:
        lp = self.log_prior(theta)
        if not np.isfinite(lp):
            return -np.inf
        return lp + self.log_likelihood(theta, data, mask)

    def check_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.layout.size:
            raise ValueError(
                f"{self.kind} expects {self.layout.size} parameters, got {theta.shape[-1]}"
            )
        return theta

    def rescale(self, theta, spec: RescaleSpec | None):
        """Shift log-degrees up by ``C`` and log-prevalences down by ``C``.

        Rates ``exp(log_d + beta)`` are unchanged. Works on a single vector or a
        stack of draws (last axis is the layout).
        """
        theta = self.check_params(theta)
        if spec is None or self.degree_name is None:
            return theta.copy()
        out = theta.copy()
        beta = self.layout.get(out, "beta")
        C = rescale_constant(beta, spec)
        deg = self.layout.get(out, self.degree_name)
        if deg.ndim == out.ndim - 1:
            self.layout.set(out, self.degree_name, deg + C)
        else:
            self.layout.set(out, self.degree_name, deg + C[..., None])
        self.layout.set(out, "beta", beta - C[..., None])
        return out


def masked(pw, mask):
    if mask is None:
        return pw
    return np.where(mask, 0.0, pw)
