from dataclasses import dataclass, field

import numpy as np
import pytest
from scipy import stats

from ardkit.diagnostics import split_rhat
from ardkit.models import RescaleSpec, make_model
from ardkit.models.base import Block
from ardkit.sampler import Posterior, SamplerConfig, SamplerError, propose, run_chain, run_chains

from toys import GaussianToy, er_dataset


@pytest.fixture(scope="module")
def er_data():
    data, _ = er_dataset(n=200, K=10, degree=300, seed=11)
    return data


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(chains=1)
    with pytest.raises(ValueError):
        SamplerConfig(iterations=50)
    with pytest.raises(ValueError):
        SamplerConfig(thin=0)
    with pytest.raises(ValueError):
        SamplerConfig(target_accept=1.0)


def test_standard_normal_target():
    model = GaussianToy(1, 1)  # no observations: posterior is the N(0, 1) prior
    cfg = SamplerConfig(chains=4, iterations=10_000, warmup=1000, thin=5, seed=1)
    post = run_chains(model, None, None, cfg)
    x = post.column("a").ravel()
    assert x.size == 8000
    assert abs(x.mean()) < 0.05
    assert 0.95 < x.std() < 1.05


def test_conjugate_normal_posterior():
    rng = np.random.default_rng(0)
    model = GaussianToy(1, 1, xa=rng.normal(1.5, 1.0, 20), xb=rng.normal(-1.0, 2.0, 5))
    post = run_chains(model, None, None, SamplerConfig(chains=4, iterations=8000, warmup=1000, thin=4, seed=2))
    for name in ("a", "b"):
        mean, sd = model.analytic(name)
        x = post.column(name).ravel()
        assert x.mean() == pytest.approx(mean, abs=4 * sd / np.sqrt(x.size / 2))
        assert x.std() == pytest.approx(sd, rel=0.05)


def test_step_sizes_frozen_after_warmup():
    cfg = SamplerConfig(chains=2, iterations=200, warmup=300, seed=2)
    res = run_chain(GaussianToy(1, 1), None, None, cfg, chain_id=0)
    post_warmup = res.step_trace[cfg.warmup :]
    assert np.all(post_warmup == post_warmup[0])
    assert not np.all(res.step_trace[: cfg.warmup] == res.step_trace[0])


def test_adaptation_reaches_target():
    cfg = SamplerConfig(chains=2, iterations=4000, warmup=2000, seed=3)
    res = run_chain(GaussianToy(1, 1), None, None, cfg)
    for rate in res.accept_rate.values():
        assert 0.35 < rate < 0.53


def test_same_seed_same_draws(er_data):
    model = make_model("er", er_data)
    spec = RescaleSpec.from_data(er_data)
    cfg = SamplerConfig(chains=2, iterations=100, warmup=100, seed=4)
    a = run_chains(model, er_data, spec, cfg)
    b = run_chains(model, er_data, spec, cfg)
    assert np.array_equal(a.draws, b.draws)
    c = run_chains(model, er_data, spec, SamplerConfig(chains=2, iterations=100, warmup=100, seed=5))
    assert not np.array_equal(a.draws, c.draws)


def test_parallel_matches_serial(er_data):
    model = make_model("vd", er_data)
    spec = RescaleSpec.from_data(er_data)
    serial = run_chains(model, er_data, spec, SamplerConfig(chains=2, iterations=100, warmup=50, seed=6))
    parallel = run_chains(model, er_data, spec, SamplerConfig(chains=2, iterations=100, warmup=50, seed=6, threads=2))
    assert np.array_equal(serial.draws, parallel.draws)


def test_draw_count_and_thinning(er_data):
    model = make_model("er", er_data)
    post = run_chains(model, er_data, None, SamplerConfig(chains=3, iterations=300, warmup=10, thin=3, seed=7))
    assert post.draws.shape == (3, 100, model.layout.size)
    assert post.log_post.shape == (3, 100)
    assert len(post.names) == model.layout.size


def test_stored_draws_already_rescaled(er_data):
    model = make_model("od", er_data)
    spec = RescaleSpec.from_data(er_data)
    post = run_chains(model, er_data, spec, SamplerConfig(chains=2, iterations=100, warmup=100, seed=8))
    flat = post.pooled()
    assert np.allclose(model.rescale(flat, spec), flat, rtol=0, atol=1e-12)
    beta = model.layout.get(flat, "beta")[:, spec.idx]
    assert np.allclose(np.exp(beta).sum(axis=1), spec.known_prev, rtol=1e-12)


def test_stored_draws_respect_domains(er_data):
    model = make_model("latent", er_data)
    post = run_chains(model, er_data, RescaleSpec.from_data(er_data), SamplerConfig(chains=2, iterations=100, warmup=100, seed=9))
    flat = post.pooled()
    lay = model.layout
    assert np.allclose(np.linalg.norm(lay.get(flat, "z"), axis=-1), 1, atol=1e-12)
    assert np.allclose(lay.get(flat, "nu")[:, list(model.anchor_idx)], model.anchor_dirs)
    assert np.all(lay.get(flat, "eta") > 0) and np.all(lay.get(flat, "zeta") > 0)
    assert np.all(lay.get(flat, "sigma_alpha") > 0)


def test_barrier_draws_integer_and_feasible(er_data):
    model = make_model("barrier", er_data)
    post = run_chains(model, er_data, None, SamplerConfig(chains=2, iterations=100, warmup=100, seed=10))
    d = model.layout.get(post.pooled(), "d")
    assert np.all(d == np.round(d))
    assert np.all(d >= er_data.y.max(axis=1))


@pytest.mark.slow
def test_rescaling_fixes_degree_convergence(er_data):
    model = make_model("er", er_data)
    spec = RescaleSpec.from_data(er_data)
    unscaled = []
    for seed in range(3):
        cfg = SamplerConfig(chains=4, iterations=1000, warmup=1000, seed=100 + seed)
        scaled = run_chains(model, er_data, spec, cfg)
        assert split_rhat(scaled.column("log_d")) < 1.05
        unscaled.append(split_rhat(run_chains(model, er_data, None, cfg).column("log_d")))
    assert sum(r > 1.05 for r in unscaled) >= 2


def test_subpopulation_sizes_recovered(er_data):
    model = make_model("er", er_data)
    spec = RescaleSpec.from_data(er_data)
    post = run_chains(model, er_data, spec, SamplerConfig(chains=4, iterations=1000, warmup=500, seed=12))
    sizes = er_data.population_n * np.exp(model.layout.get(post.pooled(), "beta"))
    true = np.geomspace(0.002, 0.03, 10) * er_data.population_n
    z = np.abs(sizes.mean(axis=0) - true) / sizes.std(axis=0)
    assert np.mean(z < 3) >= 0.8


def test_summary_and_round_trip(tmp_path, er_data):
    model = make_model("er", er_data)
    post = run_chains(model, er_data, RescaleSpec.from_data(er_data), SamplerConfig(chains=2, iterations=100, warmup=50, seed=13), model_options={"n_fixed": 4})
    summ = post.summary(["log_d"])
    x = post.column("log_d").ravel()
    assert summ["log_d"]["mean"] == pytest.approx(x.mean())
    assert summ["log_d"]["q5"] <= summ["log_d"]["q50"] <= summ["log_d"]["q95"]
    post.save(tmp_path / "p", extra_manifest={"note": "x"})
    back = Posterior.load(tmp_path / "p")
    assert np.array_equal(back.draws, post.draws)
    assert back.names == post.names and back.model_kind == "er"
    assert back.fingerprint == er_data.fingerprint
    assert back.model_options == {"n_fixed": 4}
    with pytest.raises(KeyError):
        post.column("nope")


@dataclass
class _BadStart(GaussianToy):
    def initial_params(self, data, rng, mask=None):
        return np.array([np.nan, 0.0])


def test_non_finite_start_aborts():
    with pytest.raises(SamplerError, match="initial point"):
        run_chains(_BadStart(1, 1), None, None, SamplerConfig(chains=2, iterations=100, warmup=0))


@dataclass
class _Pinned(GaussianToy):
    """Support is the single point a == 0.5, so every move of ``a`` is rejected."""

    def log_prior(self, theta):
        return 0.0 if theta[0] == 0.5 else -np.inf

    def initial_params(self, data, rng, mask=None):
        return np.array([0.5, 0.0])


def test_all_rejection_warns():
    with pytest.warns(RuntimeWarning, match="rejected every"):
        post = run_chains(_Pinned(1, 1), None, None, SamplerConfig(chains=2, iterations=100, warmup=0))
    assert any("'a'" in w for w in post.warnings)


@dataclass
class _Exploding(GaussianToy):
    calls: list = field(default_factory=list)

    def log_likelihood(self, theta, data=None, mask=None):
        self.calls.append(1)
        if len(self.calls) > 5:
            raise RuntimeError("boom")
        return 0.0


def test_chain_failure_names_chain():
    with pytest.raises(SamplerError, match="chain 0 failed"):
        run_chains(_Exploding(1, 1), None, None, SamplerConfig(chains=2, iterations=100, warmup=0))


# -- proposals ------------------------------------------------------------


def test_sphere_proposal_stays_on_sphere():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    new, logq = propose(Block("z", "sphere", "row", scale=0.5), x, 1.0, rng)
    assert np.allclose(np.linalg.norm(new, axis=1), 1, atol=1e-12)
    assert np.all(logq == 0) and logq.shape == (50,)


def test_integer_proposal_symmetric_nonzero():
    rng = np.random.default_rng(1)
    x = np.full(200_000, 100.0)
    new, _ = propose(Block("d", "integer", "row", scale=3.0), x, 1.0, rng)
    jump = new - x
    assert np.all(jump != 0) and np.all(jump == np.round(jump))
    assert abs(jump.mean()) < 0.05
    assert np.mean(jump == 2) == pytest.approx(np.mean(jump == -2), abs=0.005)


def test_positive_and_unit_jacobians():
    rng = np.random.default_rng(2)
    x = np.array([0.5, 2.0])
    new, logq = propose(Block("s", "positive", "col"), x, 0.3, rng)
    assert np.all(new > 0) and np.allclose(logq, np.log(new / x))
    u = np.array([0.2, 0.9])
    new, logq = propose(Block("p", "unit", "col"), u, 0.3, rng)
    assert np.all((new > 0) & (new < 1))
    assert np.allclose(logq, np.log(new * (1 - new)) - np.log(u * (1 - u)))


def test_positive_block_samples_gamma_target():
    # Jacobian check: log-scale walk on a Gamma(3, 1) target
    @dataclass
    class GammaToy(GaussianToy):
        def log_prior(self, theta):
            a = theta[0]
            return float(stats.gamma.logpdf(a, 3.0)) if a > 0 else -np.inf

        def log_likelihood(self, theta, data=None, mask=None):
            return float(stats.norm.logpdf(theta[1]))

        def blocks(self, data):
            return [Block("a", "positive", "global"), Block("b", "real", "global")]

        def initial_params(self, data, rng, mask=None):
            return np.array([1.0, 0.0])

    post = run_chains(GammaToy(1, 1), None, None, SamplerConfig(chains=4, iterations=6000, warmup=1000, thin=3, seed=3))
    x = post.column("a").ravel()
    assert stats.kstest(x, stats.gamma(3.0).cdf).statistic < 0.03


@pytest.fixture(scope="module")
def synthetic():
    from ardkit.simgen import default_latent_config, mccarty_barrier_config, simulate_barrier_effects, simulate_latent_space

    return {
        "latent": simulate_latent_space(default_latent_config(sample_n=200, seed=1))[0],
        "barrier": simulate_barrier_effects(mccarty_barrier_config(sample_n=500, seed=2))[0],
    }


@pytest.mark.slow
@pytest.mark.parametrize(
    "dataset, kind",
    [(d, k) for d in ("latent", "barrier") for k in ("er", "vd", "od")] + [("latent", "latent"), ("barrier", "barrier")],
)
def test_acceptance_rates_in_range(synthetic, dataset, kind):
    data = synthetic[dataset]
    model = make_model(kind, data)
    post = run_chains(model, data, RescaleSpec.from_data(data), SamplerConfig(chains=2, iterations=200, warmup=600, seed=3))
    for chain in post.accept_rate:
        for block, rate in chain.items():
            assert 0.1 < rate < 0.8, (block, rate)
