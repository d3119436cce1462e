import json
import subprocess
import sys

import numpy as np
import pytest

from ian.cli import (EXIT_DATA, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, RunManifest, UsageError,
                     load_edges, main, read_config)


def read_csv(p):
    return np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def clusters_csv(work):
    assert main(["gen", "--kind", "gauss_clusters", "--seed", "0", "--out", "data"]) == EXIT_OK
    return work / "data" / "points.csv"


@pytest.fixture
def line_csv(work):
    assert main(["gen", "--kind", "grid", "--dim", "1", "--side", "60", "--out", "line"]) == EXIT_OK
    return work / "line" / "points.csv"


def test_gen_grid(work):
    assert main(["gen", "--kind", "grid", "--dim", "2", "--side", "10", "--out", "g"]) == EXIT_OK
    x = np.loadtxt(work / "g" / "points.csv", delimiter=",", ndmin=2)
    assert x.shape == (100, 2)
    meta = json.loads((work / "g" / "points.json").read_text())
    assert meta["spec"]["kind"] == "grid" and meta["n_points"] == 100


def test_gen_cylinder_size(work):
    assert main(["gen", "--kind", "cylinder5d", "--out", "c"]) == EXIT_OK
    assert np.loadtxt(work / "c" / "points.csv", delimiter=",", ndmin=2).shape == (8403, 6)


def test_gen_is_deterministic(work):
    for out in ("a", "b"):
        assert main(["gen", "--kind", "spiral", "--n", "300", "--seed", "7", "--out", out]) == EXIT_OK
    assert (work / "a" / "points.csv").read_bytes() == (work / "b" / "points.csv").read_bytes()


def test_gen_svg(work):
    assert main(["gen", "--kind", "spiral", "--n", "50", "--svg", "--out", "s"]) == EXIT_OK
    assert (work / "s" / "points.svg").read_text().startswith("<svg")


@pytest.mark.parametrize("argv", [
    ["gen", "--kind", "torus", "--out", "x"],
    ["gen", "--kind", "grid", "--lattice", "hex", "--out", "x"],
    ["gen", "--kind", "grid", "--side", "--out", "x"],
    ["gen", "--kind", "grid"],
    ["frobnicate"],
    ["run", "in.csv", "--out", "x", "--bogus"],
])
def test_usage_errors(work, argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_run_clusters(clusters_csv, work):
    assert main(["run", str(clusters_csv), "--out", "run"]) == EXIT_OK
    s = json.loads((work / "run" / "summary.json").read_text())
    assert s["components"] == 3 and s["converged"]
    for name in ("edges.tsv", "weights.tsv", "sigma.csv", "delta.csv", "manifest.json"):
        assert (work / "run" / name).exists()
    m = RunManifest.read(work / "run" / "manifest.json")
    assert all((work / p).exists() for p in m.outputs)
    assert m.command == "run" and m.version
    g = load_edges(work / "run" / "edges.tsv", 350)
    assert g.n_edges == s["n_edges"]
    header = (work / "run" / "weights.tsv").read_text().splitlines()[0]
    assert header == "i\tj\tw"


def test_replay_is_byte_identical(clusters_csv, work):
    assert main(["run", str(clusters_csv), "--out", "run", "--c-search", "bisect"]) == EXIT_OK
    assert main(["replay", "run/manifest.json", "--out", "again"]) == EXIT_OK
    for name in ("edges.tsv", "weights.tsv", "sigma.csv", "delta.csv", "summary.json"):
        assert (work / "run" / name).read_bytes() == (work / "again" / name).read_bytes()


def test_fixed_c_recorded(clusters_csv, work):
    assert main(["run", str(clusters_csv), "--out", "run", "--c-fixed", "0.9"]) == EXIT_OK
    s = json.loads((work / "run" / "summary.json").read_text())
    assert s["c_star"] == 0.9 and s["config"]["c_fixed"] == 0.9


def test_iteration_cap_exit_code(clusters_csv):
    assert main(["run", str(clusters_csv), "--out", "run", "--max-iterations", "1"]) == EXIT_NOT_CONVERGED


def test_config_file_and_override(clusters_csv, work):
    (work / "cfg.txt").write_text("# fixed scale run\nc-fixed = 0.8\nkeep_connected = true\n")
    assert main(["run", str(clusters_csv), "--out", "a", "--config", "cfg.txt"]) == EXIT_OK
    s = json.loads((work / "a" / "summary.json").read_text())
    assert s["c_star"] == 0.8 and s["config"]["keep_connected"]
    assert main(["run", str(clusters_csv), "--out", "b", "--config", "cfg.txt",
                 "--c-fixed", "0.95"]) == EXIT_OK
    assert json.loads((work / "b" / "summary.json").read_text())["c_star"] == 0.95


def test_config_errors(clusters_csv, work):
    (work / "bad.txt").write_text("colour = blue\n")
    assert main(["run", str(clusters_csv), "--out", "a", "--config", "bad.txt"]) == EXIT_USAGE
    (work / "bad2.txt").write_text("just words\n")
    with pytest.raises(UsageError, match="key = value"):
        read_config(work / "bad2.txt")


def test_missing_input_is_data_error(work, capsys):
    assert main(["run", "nope.csv", "--out", "x"]) == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_duplicate_points_are_data_error(work):
    (work / "dup.csv").write_text("0,0\n1,1\n0,0\n")
    assert main(["run", "dup.csv", "--out", "x"]) == EXIT_DATA


def test_missing_run_prerequisites(line_csv, work, capsys):
    (work / "empty").mkdir()
    assert main(["dim", str(line_csv), "--out", "d", "--run", "empty"]) == EXIT_DATA
    assert "prerequisite" in capsys.readouterr().err


def test_dim_on_line(line_csv, work):
    assert main(["dim", str(line_csv), "--out", "d", "--graph", "gabriel", "--method", "both",
                 "--k", "10"]) == EXIT_OK
    ncd = read_csv(work / "d" / "dim_ncd.csv")
    assert np.all(np.abs(ncd[:, 4] - 1) <= 0.06)
    assert read_csv(work / "d" / "dim_mle.csv").shape == (60, 2)


def test_heat_geodesic_on_line(line_csv, work):
    assert main(["geodesic", str(line_csv), "--out", "h", "--graph", "gabriel", "--method", "heat",
                 "--source", "0"]) == EXIT_OK
    dist = read_csv(work / "h" / "geodesic_heat.csv")[:, 1]
    assert dist[0] == 0 and np.all(np.diff(dist) > 0)


def test_geodesic_from_run_dir(line_csv, work):
    assert main(["run", str(line_csv), "--out", "r", "--c-fixed", "1.0"]) == EXIT_OK
    assert main(["geodesic", str(line_csv), "--out", "g", "--run", "r", "--source", "medoid"]) == EXIT_OK
    assert (work / "g" / "geodesic_graph.csv").exists()


def test_bad_source(line_csv):
    assert main(["geodesic", str(line_csv), "--out", "g", "--graph", "gabriel",
                 "--source", "999"]) == EXIT_USAGE


def test_embed_isomap_bent_plane(work):
    assert main(["gen", "--kind", "bent_plane", "--n", "300", "--out", "bp"]) == EXIT_OK
    assert main(["embed", "bp/points.csv", "--out", "e", "--method", "isomap", "--m", "2"]) == EXIT_OK
    assert read_csv(work / "e" / "embed_isomap.csv").shape == (300, 3)
    eig = json.loads((work / "e" / "embed_isomap.json").read_text())
    assert len(eig["eigenvalues"]) == 2


def test_embed_diffusion(line_csv, work):
    assert main(["embed", str(line_csv), "--out", "e", "--graph", "gabriel", "--m", "1"]) == EXIT_OK
    assert read_csv(work / "e" / "embed_diffusion.csv").shape == (60, 2)


def test_writes_only_inside_out(clusters_csv, work):
    before = {p for p in work.rglob("*")}
    assert main(["run", str(clusters_csv), "--out", "only", "--c-fixed", "0.9"]) == EXIT_OK
    new = {p for p in work.rglob("*")} - before
    assert new and all(p == work / "only" or (work / "only") in p.parents for p in new)


def test_distance_matrix_input(work):
    x = np.random.default_rng(0).uniform(size=(40, 2))
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    np.savetxt(work / "d.csv", d, delimiter=",")
    assert main(["run", "d.csv", "--format", "distances", "--out", "r"]) == EXIT_OK


def test_module_entry_point(work):
    r = subprocess.run([sys.executable, "-m", "ian", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("ian ")
