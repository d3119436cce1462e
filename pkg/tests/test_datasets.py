import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ian.datasets import (KINDS, DatasetSpec, DistanceMatrix, PointCloud, generate, load_points,
                          pairwise_distances, save_points)

from conftest import dist


def test_grid_1d_positions():
    pc = generate(DatasetSpec("grid", {"dim": 1, "side": 5, "spacing": 1.0}))
    assert pc.coords.ravel().tolist() == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert pc.meta["interior"].tolist() == [False, True, True, True, False]


def test_cylinder_defaults():
    pc = generate(DatasetSpec("cylinder5d"))
    assert pc.coords.shape == (8403, 6)
    radial = np.linalg.norm(pc.coords[:, 1:], axis=1)
    np.testing.assert_allclose(radial, 1.0, rtol=1e-12)
    assert 0 <= pc.coords[:, 0].min() and pc.coords[:, 0].max() <= 3.0


def test_pairwise_345():
    d = pairwise_distances(PointCloud([[0, 0], [3, 4]]))
    assert d.d[0, 1] == 5.0 and d.d[1, 0] == 5.0


def test_pairwise_matches_double_loop():
    x = np.random.default_rng(3).normal(size=(50, 4))
    d = pairwise_distances(PointCloud(x)).d
    for i in range(50):
        for j in range(50):
            assert d[i, j] == pytest.approx(np.sqrt(sum((x[i, k] - x[j, k]) ** 2 for k in range(4))),
                                            rel=1e-12, abs=1e-15)


def test_pairwise_blocking_is_bit_identical():
    pc = PointCloud(np.random.default_rng(1).normal(size=(97, 3)))
    assert np.array_equal(pairwise_distances(pc).d, pairwise_distances(pc, block=7).d)


@pytest.mark.parametrize("kind", KINDS)
def test_generate_is_deterministic(kind):
    params = {"n": 200} if kind in ("cylinder5d", "swiss_cheese", "ball", "bent_plane") else {}
    a = generate(DatasetSpec(kind, params, seed=5))
    b = generate(DatasetSpec(kind, params, seed=5))
    assert np.array_equal(a.coords, b.coords)
    d = pairwise_distances(a)
    assert not d.triangle_violations(2000)


def test_jittered_grid_mean_degree_near_four():
    from ian.gabriel import degree_stats, gabriel_graph
    pc = generate(DatasetSpec("jittered_grid", {"dim": 2, "side": 20, "jitter": 0.5}, seed=0))
    g = gabriel_graph(pairwise_distances(pc))
    assert degree_stats(g, pc.meta["interior"]).mean == pytest.approx(4.0, rel=0.15)


def test_swiss_cheese_points_avoid_holes():
    pc = generate(DatasetSpec("swiss_cheese", {"n": 1500}, seed=2))
    for cx, cy, r in pc.meta["holes"]:
        assert np.all(np.hypot(pc.coords[:, 0] - cx, pc.coords[:, 1] - cy) >= r)


def test_stingray_layout():
    pc = generate(DatasetSpec("stingray", seed=0))
    part = pc.meta["part"]
    body = pc.coords[part == "body"]
    assert np.all(np.hypot(*body.T) <= 1.0 + 1e-9)
    # roughly 20% of the points are gone
    full = generate(DatasetSpec("stingray", {"delete": 0.0}, seed=0))
    assert pc.n_points / full.n_points == pytest.approx(0.8, abs=0.05)


@pytest.mark.parametrize("kind,params,msg", [
    ("jittered_grid", {"jitter": -0.1}, "jitter"),
    ("stingray", {"delete": 1.0}, "deletion"),
    ("grid", {"lattice": "hex"}, "lattice"),
    ("grid", {"dim": 3, "lattice": "triangular"}, "triangular"),
    ("spiral", {"bogus": 1}, "unknown"),
])
def test_invalid_specs_rejected(kind, params, msg):
    with pytest.raises(ValueError, match=msg):
        DatasetSpec(kind, params)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown dataset kind"):
        DatasetSpec("torus")


def test_load_coordinate_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("0,0\n1,0\n0,2\n")
    pc = load_points(p)
    assert (pc.n_points, pc.n_dims) == (3, 2)


def test_load_with_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("x,y\n0,0\n1,0\n")
    assert load_points(p, header=True).n_points == 2


def test_duplicate_rows_rejected(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("0,0\n1,1\n0,0\n")
    with pytest.raises(ValueError, match="duplicate points"):
        load_points(p)


@pytest.mark.parametrize("text,msg", [("0,0\n1\n", "ragged"), ("0,a\n1,2\n", "non-numeric")])
def test_malformed_csv(tmp_path, text, msg):
    p = tmp_path / "x.csv"
    p.write_text(text)
    with pytest.raises(ValueError, match=msg):
        load_points(p)


def test_distance_csv(tmp_path):
    x = np.random.default_rng(0).normal(size=(4, 2))
    p = tmp_path / "d.csv"
    np.savetxt(p, dist(x), delimiter=",")
    d = load_points(p, format="distances")
    assert isinstance(d, DistanceMatrix) and d.n_points == 4


def test_asymmetric_distance_rejected(tmp_path):
    d = dist(np.arange(4.0)[:, None])
    d[0, 1] += 1e-6
    p = tmp_path / "d.csv"
    np.savetxt(p, d, delimiter=",")
    with pytest.raises(ValueError, match="symmetric"):
        load_points(p, format="distances")


def test_save_points_roundtrip(tmp_path):
    spec = DatasetSpec("spiral", {"n": 50}, seed=7)
    pc = generate(spec)
    csv_path, meta_path = save_points(pc, tmp_path / "s.csv", spec)
    back = load_points(csv_path)
    assert np.array_equal(back.coords, pc.coords)
    meta = json.loads(meta_path.read_text())
    assert meta["spec"]["seed"] == 7 and meta["spec"]["params"]["n"] == 50
    assert len(meta["meta"]["arclength"]) == 50


@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_distance_invariants(n, dim, seed):
    x = np.random.default_rng(seed).normal(size=(n, dim))
    d = pairwise_distances(PointCloud(x)).d
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)
    off = ~np.eye(n, dtype=bool)
    assert np.all(d[off] > 0)
