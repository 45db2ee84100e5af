import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pathoed.navmesh import NavMesh, load_mesh
from pathoed.policy import PathDistribution, PolicyParams, uniform_params

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# five-node example mesh, 1-based edge list
EXAMPLE_MESH_TEXT = """\
# five-node example
5
1 2
1 3
1 4
2 3
2 4
3 1
4 3
5 2
"""


def example_mesh() -> NavMesh:
    return load_mesh(EXAMPLE_MESH_TEXT)


def example_params(order=None, lag_mode="opt") -> PolicyParams:
    """All parameters 1/2 except the transition parameter of arc v1 -> v4, which is 4/5."""
    mesh = example_mesh()
    params = uniform_params(mesh, order, lag_mode)
    params.transition[mesh.arc_index[0, 3]] = 0.8
    if order == 2:
        params.lag_weights = np.array([2 / 3, 1 / 3])
    return params


def example_dist(kind="first", n=3, order=None, lag_mode="opt") -> PathDistribution:
    if kind != "first" and order is None:
        order = 2
    return PathDistribution(kind, example_mesh(), example_params(order, lag_mode), n, order)


def random_mesh(rng, n_vertices) -> NavMesh:
    """Strongly connected random digraph: a ring plus random chords."""
    arcs = {(i, (i + 1) % n_vertices) for i in range(n_vertices)}
    for i in range(n_vertices):
        for _ in range(int(rng.integers(0, 3))):
            j = int(rng.integers(n_vertices))
            if j != i:
                arcs.add((i, j))
    return NavMesh(n_vertices, arcs)


def random_params(rng, mesh, order=None, lo=0.05, hi=0.95, lag_mode="opt") -> PolicyParams:
    lag = None if order is None else rng.dirichlet(np.ones(order))
    return PolicyParams(rng.uniform(lo, hi, mesh.num_vertices),
                        rng.uniform(lo, hi, mesh.num_arcs), lag, lag_mode)


@pytest.fixture
def mesh5():
    return example_mesh()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.VERDICTS):
            terminalreporter.write_line(test_acceptance.VERDICTS[n])
