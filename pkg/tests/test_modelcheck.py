import numpy as np
import pytest
from scipy import stats

from ardkit.dataio import DataValidationError, GroundTruth
from ardkit.models import make_model
from ardkit.modelcheck import (
    DEFAULT_M,
    degree_report,
    ppc,
    replicate_proportions,
    scale_up_degree,
    subpop_recovery,
)

from toys import FixedPosterior, er_dataset, tiny_dataset


def er_point_mass(data, degree, prev, S=200):
    model = make_model("er", data)
    theta = model.layout.pack({"log_d": np.log(degree), "beta": np.log(prev)})
    draws = np.tile(theta, (S, 1))
    return model, FixedPosterior(draws, model.layout.flat_names(), data.fingerprint)


def test_replicate_proportions_match_poisson_pmf():
    data, rates = er_dataset(n=300, K=4, degree=200, seed=1)
    prev = rates / 200
    model, post = er_point_mass(data, 200, prev)
    props = replicate_proportions(model, post.pooled(), data.y.shape, DEFAULT_M, seed=3)
    assert props.shape == (200, 4, len(DEFAULT_M))
    pmf = stats.poisson.pmf(np.array(DEFAULT_M)[None, :], rates[:, None])
    se = np.sqrt(pmf * (1 - pmf) / (300 * 200))
    assert np.all(np.abs(props.mean(axis=0) - pmf) < 4 * se + 1e-12)


def test_ppc_well_specified_mostly_contained():
    data, rates = er_dataset(n=300, K=6, degree=200, seed=2)
    model, post = er_point_mass(data, 200, rates / 200)
    rep = ppc(post, model, data, seed=0)
    assert rep.contained.shape == (6, len(DEFAULT_M))
    assert rep.n_contained >= 0.85 * rep.contained.size
    assert np.all(rep.lower <= rep.upper)


def test_ppc_misspecified_not_contained():
    # data have degree 200; the draws claim degree 50
    data, rates = er_dataset(n=300, K=6, degree=200, seed=2)
    model, post = er_point_mass(data, 50, rates / 200)
    rep = ppc(post, model, data, m_set=[0, 1], seed=0)
    assert rep.n_contained <= 2


def test_ppc_observed_proportions_hand_computed():
    data = tiny_dataset([[0, 1], [0, 3], [1, 1], [0, 0]], N=100_000)
    model, post = er_point_mass(data, 10, [0.01, 0.02], S=20)
    rep = ppc(post, model, data, m_set=[0, 1, 3])
    assert rep.observed.tolist() == [[0.75, 0.25, 0.0], [0.25, 0.5, 0.25]]


def test_ppc_deterministic_and_seeded():
    data, rates = er_dataset(n=50, K=3, seed=4)
    model, post = er_point_mass(data, 300, rates / 300, S=50)
    a = ppc(post, model, data, seed=1)
    b = ppc(post, model, data, seed=1)
    c = ppc(post, model, data, seed=2)
    assert np.array_equal(a.lower, b.lower) and np.array_equal(a.upper, b.upper)
    assert not (np.array_equal(a.lower, c.lower) and np.array_equal(a.upper, c.upper))


def test_ppc_report_rows():
    data, rates = er_dataset(n=50, K=3, seed=4)
    model, post = er_point_mass(data, 300, rates / 300, S=30)
    rep = ppc(post, model, data, m_set=[0, 2], max_draws=10)
    d = rep.to_dict(data.names)
    assert d["n_cells"] == 6 and len(d["cells"]) == 6
    assert d["cells"][1]["subpop"] == data.names[0] and d["cells"][1]["m"] == 2
    assert d["n_contained"] == sum(c["contained"] for c in d["cells"])


def test_ppc_rejects_other_dataset():
    data, rates = er_dataset(n=50, K=3, seed=4)
    other, _ = er_dataset(n=50, K=3, seed=5)
    model, post = er_point_mass(data, 300, rates / 300, S=5)
    with pytest.raises(DataValidationError, match="fit to dataset"):
        ppc(post, model, other)


def test_subpop_recovery_quantiles_and_order():
    data = tiny_dataset([[1, 2, 3]], known=[100, 50, 20], N=10_000)
    model = make_model("er", data)
    rng = np.random.default_rng(0)
    beta = np.log([0.01, 0.005, 0.002]) + rng.normal(0, 0.1, (2000, 3))
    draws = np.column_stack([np.zeros(2000), beta])
    post = FixedPosterior(draws, model.layout.flat_names())
    truth = GroundTruth(degrees=np.array([5]), subpop_sizes=np.array([100, 50, 1000]))
    rep = subpop_recovery(post, model, data, truth)
    sizes = 10_000 * np.exp(beta)
    assert np.allclose(rep.median, np.median(sizes, axis=0))
    assert np.allclose(rep.q90, np.percentile(sizes, [5, 95], axis=0).T)
    assert rep.order.tolist() == [2, 1, 0]
    assert rep.contained_90.tolist() == [True, True, False]
    d = rep.to_dict()
    assert [r["subpop"] for r in d["subpops"]] == ["s2", "s1", "s0"]
    assert d["coverage_90"] == pytest.approx(2 / 3)


def test_subpop_recovery_fixed_known_sizes_contained():
    # barrier draws hold known prevalences fixed: zero-width intervals
    data = tiny_dataset([[1, 2]], known=[123, 457], N=1_000_003)
    model = make_model("barrier", data)
    m = np.array([123, 457]) / 1_000_003
    draws = np.tile(model.layout.pack({"d": [10], "m": m, "rho": [0.1, 0.1]}), (50, 1))
    rep = subpop_recovery(FixedPosterior(draws, model.layout.flat_names()), model, data, GroundTruth(np.array([10]), np.array([123, 457])))
    assert rep.contained_90.all() and rep.contained_50.all()


def test_subpop_recovery_truth_mismatch():
    data = tiny_dataset([[1, 2]])
    model = make_model("er", data)
    post = FixedPosterior(np.zeros((5, 3)), model.layout.flat_names())
    with pytest.raises(DataValidationError):
        subpop_recovery(post, model, data, GroundTruth(np.array([1, 2]), np.array([10, 20])))
    assert subpop_recovery(post, model, data).contained_90 is None


def test_degree_report_hand_computed():
    data = tiny_dataset([[1, 2], [3, 4]])
    model = make_model("vd", data)
    lay = model.layout
    a = lay.pack({k: np.zeros(lay.shapes[k] or ()) for k in lay.names})
    b = a.copy()
    lay.set(a, "log_d", np.log([10.0, 40.0]))
    lay.set(b, "log_d", np.log([30.0, 40.0]))
    post = FixedPosterior(np.stack([a, b]), lay.flat_names())
    rep = degree_report(post, model, GroundTruth(np.array([20, 50]), np.array([10, 20])))
    assert rep["posterior_mean_degree"] == pytest.approx([20.0, 40.0])
    assert rep["mean_degree"] == pytest.approx(30.0)
    assert rep["true_mean_degree"] == 35.0
    assert rep["mean_relative_error"] == pytest.approx((0 + 0.2) / 2)
    with pytest.raises(DataValidationError):
        degree_report(post, model, GroundTruth(np.array([1, 2, 3]), np.array([1, 2])))


def test_scale_up_hand_computed():
    data = tiny_dataset([[2, 6, 9], [0, 0, 1]], known=[100, 300, 50], N=10_000)
    d = scale_up_degree(data)
    assert d.tolist() == pytest.approx([10_000 * 17 / 450, 10_000 * 1 / 450])
    mask = np.zeros((2, 3), bool)
    mask[0, 1] = True
    d = scale_up_degree(data, mask)
    assert d[0] == pytest.approx(10_000 * 11 / 150)
