import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ian.datasets import DatasetSpec, PointCloud, generate, pairwise_distances
from ian.dimension import (extended_neighborhood, graph_neighborhoods, knn_neighborhoods,
                           mle_dimension, ncd_dimension, recenter, save_dimension, save_mle,
                           sigma_grid, zprime_curve)
from ian.gabriel import NeighborGraph, gabriel_graph

from conftest import dist


@pytest.fixture(scope="module")
def line():
    pc = generate(DatasetSpec("grid", {"dim": 1, "side": 200}))
    d = pairwise_distances(pc)
    return d, gabriel_graph(d)


def test_center_only_is_flat_zero():
    assert np.all(zprime_curve(0, [0], dist([[0.0], [1.0]]), np.geomspace(0.01, 10, 50)) == 0)


def test_single_neighbor_closed_form():
    r = 1.7
    d = dist([[0.0], [r]])
    sig = sigma_grid([r])
    got = zprime_curve(0, [0, 1], d, sig)
    e = np.exp(-r ** 2 / (2 * sig ** 2))
    np.testing.assert_allclose(got, r ** 2 * e / (sig ** 2 * (1 + e)), rtol=1e-12)


def test_single_neighbor_peak_against_dense_grid():
    r = 1.7
    dense = np.geomspace(0.01, 100, 2_000_001)
    e = np.exp(-r ** 2 / (2 * dense ** 2))
    oracle = np.max(r ** 2 * e / (dense ** 2 * (1 + e)))
    got = zprime_curve(0, [0, 1], dist([[0.0], [r]]), sigma_grid([r])).max()
    assert got <= oracle * (1 + 1e-12)
    assert got == pytest.approx(oracle, rel=1e-3)


def test_disc_plateau_near_two():
    rng = np.random.default_rng(0)
    rad = np.sqrt(rng.uniform(size=499))
    ang = rng.uniform(0, 2 * np.pi, 499)
    x = np.vstack([[0.0, 0.0], np.c_[rad * np.cos(ang), rad * np.sin(ang)]])
    d = dist(x)
    curve = zprime_curve(0, np.arange(500), d, sigma_grid(d[0]))
    assert 1.8 <= curve.max() <= 2.2


def test_curve_vanishes_at_grid_ends():
    x = np.random.default_rng(1).uniform(size=(60, 3))
    d = dist(x)
    curve = zprime_curve(0, np.arange(60), d, sigma_grid(d[0]))
    assert curve[0] < 1e-6 and curve[-1] < 0.02
    assert curve.max() > 1


def test_curve_errors():
    d = dist([[0.0], [1.0]])
    with pytest.raises(ValueError, match="empty"):
        zprime_curve(0, [], d, [1.0])
    with pytest.raises(ValueError):
        zprime_curve(0, [0, 1], d, [1.0, 0.5])
    with pytest.raises(ValueError):
        sigma_grid([0.0])


def test_extended_neighborhood_hops(line):
    _, g = line
    assert extended_neighborhood(g, 50, 3).tolist() == list(range(47, 54))
    assert len(extended_neighborhood(g, 50, 1, min_size=20)) >= 20
    assert len(extended_neighborhood(g, 0, 1, min_size=10 ** 6)) == 200
    with pytest.raises(ValueError):
        extended_neighborhood(g, 0, 0)


def test_recenter_prefers_middle():
    d = dist(np.arange(10.0)[:, None])
    g = NeighborGraph(10, [(k, k + 1) for k in range(9)])
    ext = np.arange(10)
    assert recenter(0, g, ext, d) == 1
    # tie between 4 and 5 on an even count keeps the node itself
    assert recenter(4, g, ext, d) == 4


def test_line_interior_is_exactly_one(line):
    d, g = line
    est = ncd_dimension(g, d)
    assert np.all(est.d_star[3:-3] == 1.0)
    assert np.all(np.abs(est.d_hat[3:-3] - 1) < 0.01)
    assert est.hops == 3 and est.n_sigma == 200


def test_eckmann_growth():
    pc = generate(DatasetSpec("jittered_grid", {"side": 15}, seed=0))
    d = pairwise_distances(pc)
    g = gabriel_graph(d)
    est = ncd_dimension(g, d, hops=1, d_guess=4)
    assert np.all(est.nbhd_size >= 100)
    fixed = ncd_dimension(g, d, hops=1, d_guess=None)
    assert np.all(fixed.nbhd_size == g.degree() + 1)
    with pytest.raises(ValueError):
        ncd_dimension(g, d, d_guess="pca")


def test_threads_match(line):
    d, g = line
    a, b = ncd_dimension(g, d), ncd_dimension(g, d, n_threads=2)
    assert np.array_equal(a.d_star, b.d_star)


@settings(max_examples=15)
@given(st.integers(0, 2 ** 31 - 1), st.integers(10, 60), st.integers(1, 3), st.floats(1e-2, 1e2))
def test_ncd_properties(seed, n, dim, lam):
    x = np.random.default_rng(seed).uniform(size=(n, dim))
    d = pairwise_distances(PointCloud(x)).d
    g = gabriel_graph(d)
    a = ncd_dimension(g, d)
    assert np.all(a.d_star >= a.d_tilde_prime)
    assert np.array_equal(a.d_star, np.maximum(a.d_hat_prime, a.d_tilde_prime))
    assert np.all(a.d_hat >= 0) and np.all(a.d_tilde_prime >= 0)
    b = ncd_dimension(g, d * lam)
    np.testing.assert_allclose(b.d_hat, a.d_hat, rtol=1e-9)
    assert np.array_equal(b.center, a.center)


def test_mle_two_neighbors():
    d = np.array([[0, 0.5, 1.0], [0.5, 0, 0.5], [1.0, 0.5, 0]])
    est = mle_dimension(d, [[1, 2], [0, 2], [1, 0]])
    assert est.m_raw[0] == pytest.approx(1 / np.log(2), rel=1e-15)
    assert est.k.tolist() == [2, 2, 2]


def lattice_mle(k):
    # neighbours of an interior lattice node sit at 1, 1, 2, 2, ...
    t = np.array([(j + 2) // 2 for j in range(k)], dtype=float)
    return 1.0 / np.mean(np.log(t[-1] / t[:-1]))


@pytest.mark.parametrize("k", [3, 5, 10, 32])
def test_mle_lattice_closed_form(line, k):
    d, _ = line
    est = mle_dimension(d, knn_neighborhoods(d, k))
    np.testing.assert_allclose(est.m_k[40:-40], lattice_mle(k), rtol=1e-12)


@pytest.mark.parametrize("k", [10, 32])
def test_mle_on_line_grid(line, k):
    d, _ = line
    m = mle_dimension(d, knn_neighborhoods(d, k)).m_k
    assert 0.9 <= m.mean() <= 1.1


@pytest.mark.parametrize("k", [5, 10, 20, 32])
def test_mle_on_random_line(k):
    x = np.sort(np.random.default_rng(0).uniform(0, 100, 400))[:, None]
    d = dist(x)
    m = mle_dimension(d, knn_neighborhoods(d, k), use_inverse_average=True).m_k
    assert 0.9 <= m.mean() <= 1.1


def test_mle_graph_neighborhoods(line):
    d, g = line
    est = mle_dimension(d, [np.unique(np.concatenate([g.neighbors(i), extended_neighborhood(g, i, 2)]))
                            for i in range(200)])
    assert np.isfinite(est.m_k).all()
    assert [len(nb) for nb in graph_neighborhoods(g)] == g.degree().tolist()


def test_mle_errors():
    d = dist([[0.0], [1.0], [3.0]])
    with pytest.raises(ValueError, match="at least 2"):
        mle_dimension(d, [[1], [0, 2], [0, 1]])
    with pytest.raises(ValueError, match="one neighborhood"):
        mle_dimension(d, [[1, 2]])
    z = np.zeros((3, 3))
    z[0, 2] = z[2, 0] = 1.0
    with pytest.raises(ValueError, match="zero distance"):
        mle_dimension(z, [[1, 2], [0, 2], [0, 1]])
    with pytest.raises(ValueError):
        knn_neighborhoods(d, 3)


@given(st.integers(0, 2 ** 31 - 1), st.floats(1e-2, 1e2))
def test_mle_scale_invariance(seed, lam):
    d = pairwise_distances(PointCloud(np.random.default_rng(seed).normal(size=(40, 3)))).d
    nb = knn_neighborhoods(d, 8)
    a, b = mle_dimension(d, nb), mle_dimension(d * lam, nb)
    np.testing.assert_allclose(b.m_k, a.m_k, rtol=1e-9)


def test_knn_order():
    d = dist(np.array([0.0, 1.0, 3.0, 7.0])[:, None])
    assert [nb.tolist() for nb in knn_neighborhoods(d, 2)] == [[1, 2], [0, 2], [1, 0], [2, 1]]


def test_exports(tmp_path, line):
    d, g = line
    p, q = tmp_path / "ncd.csv", tmp_path / "mle.csv"
    save_dimension(ncd_dimension(g, d), p)
    save_mle(mle_dimension(d, knn_neighborhoods(d, 4)), q)
    assert p.read_text().splitlines()[0] == "node,d_hat,d_hat_prime,d_tilde_prime,d_star"
    assert q.read_text().splitlines()[0] == "node,m_k"
    assert len(q.read_text().splitlines()) == 201
