"""Adaptive Metropolis-within-Gibbs over a model's update blocks.

Each sweep visits every block of the model in order. Elements of a ``row`` or
``col`` block are conditionally independent given everything else, so they are
proposed together and accepted or rejected one by one. During warmup each
block's log step size follows a Robbins-Monro recursion toward the target
acceptance rate; afterwards it is frozen. When a :class:`RescaleSpec` is given
the degree/prevalence rescaling is applied to every stored draw, while the
chain itself keeps moving in the raw parameterization.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .models.base import ArdModel, Block, RescaleSpec

log = logging.getLogger(__name__)

QUANTILES = (5, 25, 50, 75, 95)


class SamplerError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    chains: int = 4
    iterations: int = 2000
    warmup: int = 2000
    thin: int = 1
    seed: int = 0
    target_accept: float = 0.44
    # False: each vector block is accepted or rejected as a whole
    block_updates: bool = True
    adapt_window: int = 20
    threads: int = 1

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("at least 2 chains are needed for R-hat")
        if self.iterations < 100:
            raise ValueError("iterations must be >= 100")
        if self.warmup < 0 or self.thin < 1 or self.adapt_window < 1:
            raise ValueError("warmup must be >= 0, thin and adapt_window >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class ChainResult:
    chain_id: int
    draws: np.ndarray
    log_post: np.ndarray
    accept_rate: dict
    step_trace: np.ndarray
    block_names: list
    warnings: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# proposals


def _logit(x):
    return np.log(x) - np.log1p(-x)


def _expit(u):
    return 1.0 / (1.0 + np.exp(-u))


def propose(block: Block, x, step, rng):
    """Return ``(x_new, log_q)`` where ``log_q`` is the proposal log ratio per element.

    ``x`` holds the active elements; the leading axis indexes elements.
    """
    kind = block.kind
    scale = block.scale
    if isinstance(scale, np.ndarray) and block.active is not None and scale.shape[0] == block.active.shape[0]:
        scale = scale[block.active]
    s = step * np.asarray(scale, dtype=float)
    shape = np.shape(x)
    lead = shape[:1] if kind == "sphere" else shape
    zero = np.zeros(lead)
    if kind == "real":
        return x + s * rng.standard_normal(shape), zero
    if kind == "positive":
        x_new = x * np.exp(s * rng.standard_normal(shape))
        return x_new, np.log(x_new) - np.log(x)
    if kind == "unit":
        u = _logit(x) + s * rng.standard_normal(shape)
        x_new = np.clip(_expit(u), 1e-300, 1.0 - 1e-16)
        return x_new, (np.log(x_new) + np.log1p(-x_new)) - (np.log(x) + np.log1p(-x))
    if kind == "sphere":
        t = rng.standard_normal(shape)
        t -= np.sum(t * x, axis=-1, keepdims=True) * x
        x_new = x + np.reshape(s, np.shape(s) + (1,)) * t
        x_new /= np.linalg.norm(x_new, axis=-1, keepdims=True)
        return x_new, zero
    if kind == "integer":
        p = 1.0 / (1.0 + np.maximum(s, 1e-9))
        jump = rng.geometric(np.broadcast_to(p, shape)) * rng.choice([-1, 1], size=shape)
        return x + jump, zero
    raise ValueError(f"unknown block kind {kind!r}")


def _nan_to_neginf(v):
    v = np.asarray(v, dtype=float)
    return np.where(np.isnan(v), -np.inf, v)


def block_log_density(model: ArdModel, theta, block: Block, data, mask=None):
    """Unnormalized log conditional of a block: scalar for global, per element otherwise."""
    if block.axis == "global":
        lp = model.log_prior(theta)
        if block.likelihood and np.isfinite(lp):
            try:
                lp += model.log_likelihood(theta, data, mask)
            except FloatingPointError:
                return -np.inf
        return float(_nan_to_neginf(lp))
    prior = model.elementwise_log_prior(theta, block.name)
    if not block.likelihood:
        return _nan_to_neginf(prior)
    with np.errstate(over="ignore", invalid="ignore"):
        pw = model.pointwise_log_likelihood(theta, data, mask)
    ll = pw.sum(axis=1 if block.axis == "row" else 0)
    return _nan_to_neginf(ll + prior)


def _update_block(model, theta, block, step, data, mask, rng, elementwise):
    lay = model.layout
    values = lay.get(theta, block.name)
    active = block.active
    cur_vals = np.array(values) if active is None else np.array(values[active])
    if cur_vals.size == 0:
        return theta, np.nan
    new_vals, log_q = propose(block, cur_vals, step, rng)
    prop = theta.copy()
    pv = lay.get(prop, block.name)
    if block.axis == "global":
        lay.set(prop, block.name, new_vals)
    elif active is None:
        pv[...] = new_vals
    else:
        pv[active] = new_vals
    cur = block_log_density(model, theta, block, data, mask)
    new = block_log_density(model, prop, block, data, mask)
    if block.axis == "global":
        log_ratio = new - cur + float(np.sum(log_q))
        if np.log(rng.random()) < log_ratio:
            return prop, 1.0
        return theta, 0.0
    if active is not None:
        cur, new = cur[active], new[active]
    log_ratio = new - cur + log_q
    if not elementwise:
        if np.log(rng.random()) < np.sum(log_ratio):
            return prop, 1.0
        return theta, 0.0
    accept = np.log(rng.random(log_ratio.shape)) < log_ratio
    out_vals = np.where(accept.reshape(accept.shape + (1,) * (new_vals.ndim - 1)), new_vals, cur_vals)
    tv = lay.get(theta, block.name)
    if active is None:
        tv[...] = out_vals
    else:
        tv[active] = out_vals
    return theta, float(accept.mean())


# ---------------------------------------------------------------------------
# chains


def run_chain(
    model: ArdModel,
    data,
    rescale_spec: RescaleSpec | None,
    config: SamplerConfig,
    chain_id: int = 0,
    mask=None,
    init=None,
) -> ChainResult:
    """Run one chain: warmup with adaptation, then ``config.iterations`` kept sweeps."""
    init_rng = np.random.default_rng([config.seed, chain_id, 0])
    rng = np.random.default_rng([config.seed, chain_id, 1])
    theta = np.array(model.initial_params(data, init_rng, mask) if init is None else init, dtype=float)
    lp0 = model.log_posterior(theta, data, mask)
    if not np.isfinite(lp0):
        raise SamplerError(
            f"chain {chain_id}: non-finite log posterior at the initial point "
            f"(log prior {model.log_prior(theta)})"
        )
    blocks = model.blocks(data)
    nb = len(blocks)
    log_step = np.zeros(nb)
    acc_batch = np.zeros(nb)
    acc_kept = np.zeros(nb)
    n_batches = 0
    total = config.warmup + config.iterations
    n_keep = config.iterations // config.thin
    draws = np.empty((n_keep, model.layout.size))
    log_post = np.empty(n_keep)
    step_trace = np.empty((total, nb))
    kept = 0
    for it in range(total):
        for b, block in enumerate(blocks):
            theta, acc = _update_block(
                model, theta, block, np.exp(log_step[b]), data, mask, rng, config.block_updates
            )
            if it < config.warmup:
                acc_batch[b] += acc
            else:
                acc_kept[b] += acc
        if it < config.warmup and (it + 1) % config.adapt_window == 0:
            n_batches += 1
            gain = n_batches**-0.5
            log_step += gain * (acc_batch / config.adapt_window - config.target_accept)
            acc_batch[:] = 0.0
        step_trace[it] = np.exp(log_step)
        if it >= config.warmup and (it - config.warmup) % config.thin == 0 and kept < n_keep:
            draws[kept] = model.rescale(theta, rescale_spec)
            log_post[kept] = model.log_posterior(theta, data, mask)
            kept += 1
    accept_rate = {blk.name: float(acc_kept[b] / max(config.iterations, 1)) for b, blk in enumerate(blocks)}
    notes = []
    for name, rate in accept_rate.items():
        if rate == 0.0 and config.iterations > 0:
            msg = f"chain {chain_id}: block {name!r} rejected every post-warmup proposal"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
    return ChainResult(
        chain_id=chain_id,
        draws=draws,
        log_post=log_post,
        accept_rate=accept_rate,
        step_trace=step_trace,
        block_names=[blk.name for blk in blocks],
        warnings=notes,
    )


def _chain_job(args):
    model, data, spec, config, chain_id, mask = args
    try:
        return run_chain(model, data, spec, config, chain_id, mask)
    except SamplerError:
        raise
    except Exception as exc:  # identify the failing chain
        raise SamplerError(f"chain {chain_id} failed: {exc!r}") from exc


@dataclass
class Posterior:
    """Post-warmup draws of every chain, stored after rescaling.

    ``draws`` has shape ``(chains, kept iterations, parameters)``.
    """

    draws: np.ndarray
    names: list
    model_kind: str
    layout_entries: list
    log_post: np.ndarray
    accept_rate: list
    fingerprint: str
    config: dict
    rescaled: bool = True
    model_options: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    step_trace: np.ndarray | None = None

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_iter(self):
        return self.draws.shape[1]

    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])

    def column(self, label: str) -> np.ndarray:
        """Draws of one scalar slot, shape ``(chains, iterations)``."""
        try:
            j = self.names.index(label)
        except ValueError:
            raise KeyError(f"unknown parameter {label!r}") from None
        return self.draws[:, :, j]

    def summary(self, labels=None) -> dict:
        labels = self.names if labels is None else labels
        flat = self.pooled()
        out = {}
        for label in labels:
            x = flat[:, self.names.index(label)]
            qs = np.percentile(x, QUANTILES)
            entry = {"mean": float(x.mean()), "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0}
            entry.update({f"q{q}": float(v) for q, v in zip(QUANTILES, qs)})
            out[label] = entry
        return out

    # -- persistence -----------------------------------------------------
    def save(self, path, extra_manifest: dict | None = None):
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        arrays = {"draws": self.draws, "log_post": self.log_post}
        if self.step_trace is not None:
            arrays["step_trace"] = self.step_trace
        np.savez_compressed(path / "draws.npz", **arrays)
        manifest = {
            "model": self.model_kind,
            "names": self.names,
            "layout": [[name, list(shape)] for name, shape in self.layout_entries],
            "accept_rate": self.accept_rate,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "rescaled": self.rescaled,
            "model_options": _jsonable(self.model_options),
            "warnings": self.warnings,
        }
        if extra_manifest:
            manifest.update(_jsonable(extra_manifest))
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Posterior":
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text())
        with np.load(path / "draws.npz") as z:
            draws = z["draws"]
            log_post = z["log_post"]
            step_trace = z["step_trace"] if "step_trace" in z else None
        return cls(
            draws=draws,
            names=manifest["names"],
            model_kind=manifest["model"],
            layout_entries=[(name, tuple(shape)) for name, shape in manifest["layout"]],
            log_post=log_post,
            accept_rate=manifest["accept_rate"],
            fingerprint=manifest["fingerprint"],
            config=manifest["config"],
            rescaled=manifest.get("rescaled", True),
            model_options=manifest.get("model_options", {}),
            warnings=manifest.get("warnings", []),
            step_trace=step_trace,
        )


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def run_chains(
    model: ArdModel,
    data,
    rescale_spec: RescaleSpec | None,
    config: SamplerConfig,
    mask=None,
    model_options: dict | None = None,
) -> Posterior:
    """Run ``config.chains`` chains (in processes when ``threads > 1``) and assemble a Posterior."""
    jobs = [(model, data, rescale_spec, config, c, mask) for c in range(config.chains)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_chain_job, jobs))
    else:
        results = [_chain_job(job) for job in jobs]
    fingerprint = getattr(data, "fingerprint", "")
    return Posterior(
        draws=np.stack([r.draws for r in results]),
        names=model.layout.flat_names(),
        model_kind=model.kind,
        layout_entries=list(model.layout.shapes.items()),
        log_post=np.stack([r.log_post for r in results]),
        accept_rate=[r.accept_rate for r in results],
        fingerprint=fingerprint,
        config=asdict(config),
        rescaled=rescale_spec is not None,
        model_options=model_options or {},
        warnings=[w for r in results for w in r.warnings],
        step_trace=np.stack([r.step_trace for r in results]),
    )
