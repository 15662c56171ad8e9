"""Synthetic ARD generators with full ground truth.

Two generators are provided:

* a latent-space network: every population member has a position on the unit
  sphere and a gravity term, ties are Bernoulli with probability
  ``min(1, exp(g_i + g_j + zeta z_i.z_j))`` and subpopulation membership
  favours members near the subpopulation centre;
* a barrier-effects generator: integer degrees, Beta-distributed tie
  propensities and Binomial counts.

Each sampled respondent uses its own generator derived from ``(seed, index)``,
so results do not depend on the order respondents are processed in.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .dataio import ArdDataset, DataValidationError, GroundTruth, SubpopMeta
from .dists import (
    sample_beta,
    sample_binomial,
    sample_lognormal,
    sample_uniform_sphere,
)

# stream tags for numpy SeedSequence spawning
_POP, _MEMBERS, _SAMPLE, _EGO = 0, 1, 2, 3

CLAMP_TOLERANCE = 0.01


class SimulationError(ValueError):
    pass


def _from_mapping(cls, doc: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise SimulationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**doc)


@dataclass
class LatentSimConfig:
    population_n: int = 100_000
    sample_n: int = 1000
    k_subpops: int = 15
    zeta: float = 2.0
    gravity_mean: float = -3.3
    gravity_sd: float = 0.5
    subpop_target_sizes: list = field(default_factory=list)
    subpop_concentrations: list = field(default_factory=list)
    unknown_index: int = -1
    seed: int = 0

    def __post_init__(self):
        K = self.k_subpops
        if not self.subpop_target_sizes:
            self.subpop_target_sizes = np.geomspace(400, 4000, K).round().tolist()
        if not self.subpop_concentrations:
            self.subpop_concentrations = np.resize([1.0, 3.0, 6.0], K).tolist()
        sizes = np.asarray(self.subpop_target_sizes, dtype=float)
        eta = np.asarray(self.subpop_concentrations, dtype=float)
        if self.sample_n < 1 or self.sample_n > self.population_n:
            raise SimulationError("sample_n must lie in [1, population_n]")
        if sizes.shape != (K,) or eta.shape != (K,):
            raise SimulationError(f"need {K} target sizes and {K} concentrations")
        if np.any(sizes <= 0) or np.any(sizes >= self.population_n):
            raise SimulationError("target subpopulation sizes must lie in (0, population_n)")
        if not self.zeta > 0 or np.any(eta <= 0):
            raise SimulationError("zeta and every concentration must be positive")
        if self.gravity_sd < 0:
            raise SimulationError("gravity_sd must be non-negative")
        if not -K <= self.unknown_index < K:
            raise SimulationError("unknown_index out of range")

    @classmethod
    def from_dict(cls, doc):
        return _from_mapping(cls, doc)


@dataclass
class BarrierSimConfig:
    sample_n: int = 1000
    k_subpops: int = 30
    population_n: int = 250_000_000
    degree_logmean: float = 6.2
    degree_logsd: float = 0.6
    subpop_prevalences: list = field(default_factory=list)
    dispersions: list = field(default_factory=list)
    subpop_names: list = field(default_factory=list)
    unknown_index: int = -1
    seed: int = 0
    source: str = ""

    def __post_init__(self):
        K = self.k_subpops
        m = np.asarray(self.subpop_prevalences, dtype=float)
        rho = np.asarray(self.dispersions, dtype=float)
        if m.shape != (K,) or rho.shape != (K,):
            raise SimulationError(f"need {K} prevalences and {K} dispersions")
        if np.any((m <= 0) | (m >= 1)):
            raise SimulationError("prevalences m_k must lie in (0, 1)")
        if np.any((rho <= 0) | (rho >= 1)):
            raise SimulationError("dispersions rho_k must lie in (0, 1)")
        if self.degree_logsd < 0:
            raise SimulationError("degree_logsd must be non-negative")
        if self.subpop_names and len(self.subpop_names) != K:
            raise SimulationError("subpop_names must have one entry per subpopulation")
        if not -K <= self.unknown_index < K:
            raise SimulationError("unknown_index out of range")

    @classmethod
    def from_dict(cls, doc):
        return _from_mapping(cls, doc)


def _packaged(name: str) -> dict:
    return json.loads(resources.files("ardkit.data").joinpath(name).read_text())


def default_latent_config(**overrides) -> LatentSimConfig:
    doc = _packaged("latent_default.json")
    doc.update(overrides)
    return LatentSimConfig.from_dict(doc)


def mccarty_barrier_config(**overrides) -> BarrierSimConfig:
    """Barrier generator settings shipped in ``data/barrier_mccarty.json``."""
    doc = _packaged("barrier_mccarty.json")
    doc.update(overrides)
    return BarrierSimConfig.from_dict(doc)


def load_sim_config(model: str, path=None, **overrides):
    """Packaged defaults, then keys from the JSON file at ``path``, then ``overrides``."""
    if model not in ("latent", "barrier"):
        raise SimulationError(f"no generator for model {model!r}")
    base = _packaged("latent_default.json" if model == "latent" else "barrier_mccarty.json")
    if path is not None:
        base.update(json.loads(Path(path).read_text()))
    base.update(overrides)
    cls = LatentSimConfig if model == "latent" else BarrierSimConfig
    return cls.from_dict(base)


# ---------------------------------------------------------------------------
# latent space


def membership_probabilities(cos, eta, target):
    """Per-member inclusion probabilities ``c_k exp(eta_k cos)`` clamped to 1.

    ``c_k`` makes the unclamped expected size equal ``target``. Raises when
    clamping removes more than 1% of a target size.
    """
    log_w = eta * cos
    log_c = np.log(target) - np.log(np.exp(log_w).sum(axis=0))
    p = np.exp(log_w + log_c)
    lost = np.maximum(p - 1.0, 0.0).sum(axis=0)
    bad = lost > CLAMP_TOLERANCE * target
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SimulationError(
            f"subpopulation {k}: target size {target[k]:.0f} with concentration {eta[k]} needs "
            f"inclusion probabilities above 1 (clamping drops {lost[k]:.1f} expected members)"
        )
    return np.minimum(p, 1.0), np.exp(log_c)


def tie_probabilities(g_i, z_i, g, z, zeta):
    """``min(1, exp(g_i + g_j + zeta z_i.z_j))`` for one ego against every member."""
    return np.minimum(np.exp(g_i + g + zeta * (z @ z_i)), 1.0)


def simulate_latent_space(config: LatentSimConfig) -> tuple[ArdDataset, GroundTruth]:
    """Simulate ARD from the latent-space network generator.

    The returned truth keeps the population arrays (positions, gravity terms,
    membership) in memory under ``generator_params["population"]``; they are
    not written by :func:`ardkit.dataio.save_truth`.
    """
    cfg = config
    N, n, K = int(cfg.population_n), int(cfg.sample_n), int(cfg.k_subpops)
    eta = np.asarray(cfg.subpop_concentrations, dtype=float)
    target = np.asarray(cfg.subpop_target_sizes, dtype=float)

    rng = np.random.default_rng([cfg.seed, _POP])
    z = sample_uniform_sphere(rng, N)
    g = rng.normal(cfg.gravity_mean, cfg.gravity_sd, N)
    centres = sample_uniform_sphere(rng, K)

    rng = np.random.default_rng([cfg.seed, _MEMBERS])
    p_member, scale = membership_probabilities(z @ centres.T, eta, target)
    members = rng.random((N, K)) < p_member
    sizes = members.sum(axis=0)

    rng = np.random.default_rng([cfg.seed, _SAMPLE])
    egos = np.sort(rng.choice(N, size=n, replace=False))

    y = np.empty((n, K), dtype=np.int64)
    degrees = np.empty(n, dtype=np.int64)
    for row, i in enumerate(egos):
        ego_rng = np.random.default_rng([cfg.seed, _EGO, int(i)])
        p = tie_probabilities(g[i], z[i], g, z, cfg.zeta)
        tie = ego_rng.random(N) < p
        tie[i] = False
        degrees[row] = tie.sum()
        y[row] = members[tie].sum(axis=0)

    unknown = cfg.unknown_index % K
    subpops = [
        SubpopMeta(f"latent_{k}", None if k == unknown else int(sizes[k])) for k in range(K)
    ]
    data = ArdDataset(y=y, subpops=tuple(subpops), population_n=N)
    truth = GroundTruth(
        degrees=degrees,
        subpop_sizes=sizes.astype(np.int64),
        generator_params={
            "generator": "latent",
            "config": asdict(cfg),
            "ego_index": egos,
            "z": z[egos],
            "gravity": g[egos],
            "centres": centres,
            "zeta": cfg.zeta,
            "eta": eta,
            "membership_scale": scale,
            "unknown_index": unknown,
            "population": {"z": z, "gravity": g, "members": members},
        },
    )
    return data, truth


def expected_latent_counts(truth: GroundTruth) -> np.ndarray:
    """``E[y_ik] = sum_{j in G_k, j != i} p_ij`` computed from the in-memory truth ledger."""
    gp = truth.generator_params
    pop = gp["population"]
    z, g, members = pop["z"], pop["gravity"], pop["members"]
    out = np.empty((len(gp["ego_index"]), members.shape[1]))
    for row, i in enumerate(gp["ego_index"]):
        p = tie_probabilities(g[i], z[i], g, z, gp["zeta"])
        p[i] = 0.0
        out[row] = p @ members
    return out


# ---------------------------------------------------------------------------
# barrier effects


def simulate_barrier_effects(config: BarrierSimConfig) -> tuple[ArdDataset, GroundTruth]:
    """Simulate ARD from the barrier-effects generator.

    ``d_i = round(LogNormal)``, ``q_ik ~ Beta`` with mean ``m_k`` and
    intra-class correlation ``rho_k``, and ``y_ik ~ Binomial(d_i, q_ik)``.
    """
    cfg = config
    n, K, N = int(cfg.sample_n), int(cfg.k_subpops), int(cfg.population_n)
    m = np.asarray(cfg.subpop_prevalences, dtype=float)
    rho = np.asarray(cfg.dispersions, dtype=float)
    a = m * (1.0 - rho) / rho
    b = (1.0 - m) * (1.0 - rho) / rho

    y = np.empty((n, K), dtype=np.int64)
    degrees = np.empty(n, dtype=np.int64)
    for i in range(n):
        rng = np.random.default_rng([cfg.seed, _EGO, i])
        d = int(np.round(sample_lognormal(cfg.degree_logmean, cfg.degree_logsd, rng)))
        q = sample_beta(a, b, rng)
        degrees[i] = d
        y[i] = sample_binomial(d, q, rng)

    sizes = np.round(m * N).astype(np.int64)
    if np.any(sizes <= 0):
        raise SimulationError("a prevalence rounds to an empty subpopulation at this population size")
    unknown = cfg.unknown_index % K
    names = cfg.subpop_names or [f"subpop_{k}" for k in range(K)]
    subpops = [SubpopMeta(str(names[k]), None if k == unknown else int(sizes[k])) for k in range(K)]
    data = ArdDataset(y=y, subpops=tuple(subpops), population_n=N)
    truth = GroundTruth(
        degrees=degrees,
        subpop_sizes=sizes,
        generator_params={
            "generator": "barrier",
            "config": asdict(cfg),
            "d": degrees,
            "m": m,
            "rho": rho,
            "unknown_index": unknown,
        },
    )
    return data, truth


def simulate(model: str, config) -> tuple[ArdDataset, GroundTruth]:
    if model == "latent":
        return simulate_latent_space(config)
    if model == "barrier":
        return simulate_barrier_effects(config)
    raise DataValidationError(f"no generator for model {model!r}")
