import numpy as np
import pytest

from graphtime.graph import TimeVaryingGraph, scaled_identity_bridges
from graphtime.kernels import SpectralMap, timevarying_kernel_inverse
from graphtime.observations import ObservationSet, SamplingPlan

# filled in by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_adjacency(rng, n, density=0.6, connected=True):
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    W = np.triu(W, 1)
    if connected and n > 1:
        i = np.arange(n - 1)
        W[i, i + 1] += 0.1 + rng.random(n - 1)
    return W + W.T


def random_map(rng):
    if rng.random() < 0.5:
        return SpectralMap("diffusion", sigma2=float(rng.uniform(0.1, 2.0)))
    return SpectralMap("regularized-laplacian", sigma2=float(rng.uniform(0.1, 3.0)))


def random_plan(rng, n, t, allow_empty=True):
    idx = []
    for _ in range(t):
        m = int(rng.integers(0 if allow_empty else 1, n + 1))
        idx.append(np.sort(rng.choice(n, size=m, replace=False)))
    return SamplingPlan(n, tuple(idx))


def random_observations(rng, plan):
    return ObservationSet(tuple(rng.standard_normal(i.size) for i in plan.indices))


def random_timevarying_kernel(rng, n, t, s=None, static=False):
    if static:
        W = random_adjacency(rng, n)
        graph = TimeVaryingGraph.constant(W, t)
    else:
        graph = TimeVaryingGraph([random_adjacency(rng, n) for _ in range(t)])
    s = float(10 ** rng.uniform(-3, 1)) if s is None else s
    maps = [random_map(rng) for _ in range(t)]
    return graph, timevarying_kernel_inverse(graph, maps, scaled_identity_bridges(n, t, s))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
