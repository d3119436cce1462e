import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ian import DatasetSpec, IANConfig, generate, pairwise_distances, run_ian

settings.register_profile("ian", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ian")


ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs the loop on a full-size regenerated dataset")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for a criterion, then assert it."""
    def check(num, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  C{num:02d} {title}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return check


def random_cloud(rng, n, dim):
    return rng.uniform(size=(n, dim))


def dist(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))


@pytest.fixture(scope="session")
def stingray():
    pc = generate(DatasetSpec("stingray", seed=0))
    d = pairwise_distances(pc)
    return pc, d, run_ian(d, build_weighted=False)


@pytest.fixture(scope="session")
def clusters():
    pc = generate(DatasetSpec("gauss_clusters", seed=0))
    d = pairwise_distances(pc)
    return pc, d, run_ian(d, build_weighted=False)


@pytest.fixture(scope="session")
def swiss_cheese():
    pc = generate(DatasetSpec("swiss_cheese", {"n": 2000}, seed=0))
    d = pairwise_distances(pc)
    return pc, d, run_ian(d, IANConfig(c_search="bisect"), build_weighted=False)


@pytest.fixture(scope="session")
def bent_plane():
    pc = generate(DatasetSpec("bent_plane", seed=0))
    d = pairwise_distances(pc)
    return pc, d, run_ian(d)


@pytest.fixture(scope="session")
def spiral():
    pc = generate(DatasetSpec("spiral", seed=0))
    d = pairwise_distances(pc)
    return pc, d, run_ian(d)


@pytest.fixture(scope="session")
def cylinder():
    """Full 8403-point cylinder and its converged graph (several minutes)."""
    pc = generate(DatasetSpec("cylinder5d", seed=0))
    d = pairwise_distances(pc)
    res = run_ian(d, IANConfig(c_search="bisect"), build_weighted=False)
    return pc, d, res


@pytest.fixture(scope="session")
def cylinder_sub():
    pc = generate(DatasetSpec("cylinder5d", seed=0))
    idx = np.sort(np.random.default_rng(0).choice(pc.n_points, 2000, replace=False))
    from ian import PointCloud
    sub = PointCloud(pc.coords[idx], {"axis": pc.meta["axis"][idx]})
    d = pairwise_distances(sub)
    return sub, d, run_ian(d, IANConfig(c_search="bisect"), build_weighted=False)
