import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtime.graph import (
    Graph,
    GraphValidationError,
    TimeVaryingGraph,
    check_adjacency,
    extend_kronecker_sum,
    extend_tridiagonal,
    extended_laplacian_timevarying,
    laplacian,
    path_adjacency,
    scaled_identity_bridges,
    symmetrize,
)

from conftest import random_adjacency


def test_laplacian_two_vertices():
    L = laplacian(Graph([[0, 1], [1, 0]]))
    np.testing.assert_array_equal(L, [[1, -1], [-1, 1]])


def test_laplacian_empty_graph():
    np.testing.assert_array_equal(laplacian(Graph(np.zeros((3, 3)))), np.zeros((3, 3)))


def test_laplacian_random_is_psd(rng):
    L = laplacian(Graph(random_adjacency(rng, 6)))
    w = np.linalg.eigvalsh(L)
    assert w.min() >= -1e-10
    assert abs(w[0]) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_laplacian_annihilates_constants(n, seed):
    W = random_adjacency(np.random.default_rng(seed), n)
    L = laplacian(W)
    assert np.max(np.abs(L @ np.ones(n))) <= 1e-12 * max(W.sum(axis=1).max(), 1.0)
    np.testing.assert_array_equal(L, L.T)


@pytest.mark.parametrize("A, row, col", [
    ([[0, 1], [2, 0]], 0, 1),
    ([[1, 0], [0, 0]], 0, 0),
    ([[0, -1], [-1, 0]], 0, 1),
    ([[0, np.nan], [np.nan, 0]], 0, 1),
])
def test_check_adjacency_reports_first_violation(A, row, col):
    with pytest.raises(GraphValidationError) as info:
        check_adjacency(A)
    assert (info.value.row, info.value.col) == (row, col)
    assert f"row {row}, col {col}" in str(info.value)


def test_check_adjacency_tolerance():
    A = np.array([[0, 1], [1 + 5e-10, 0]])
    check_adjacency(A)
    with pytest.raises(GraphValidationError):
        check_adjacency(np.array([[0, 1], [1 + 1e-8, 0]]))


def test_check_adjacency_shape():
    with pytest.raises(GraphValidationError):
        check_adjacency(np.zeros((2, 3)))


def test_graph_is_not_repaired():
    with pytest.raises(GraphValidationError):
        Graph([[0, 1], [0, 0]])
    S = symmetrize([[1, 1], [0, 0]])
    np.testing.assert_array_equal(S, [[0, 0.5], [0.5, 0]])


def test_graph_is_immutable():
    g = Graph([[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        g.adjacency[0, 1] = 3


def test_time_varying_graph_dimension_mismatch():
    with pytest.raises(GraphValidationError):
        TimeVaryingGraph([np.zeros((2, 2)), np.zeros((3, 3))])


def test_time_varying_constant(rng):
    W = random_adjacency(rng, 4)
    g = TimeVaryingGraph.constant(W, 5)
    assert g.n_slots == 5 and g.is_time_invariant()
    assert all(s is g.slots[0] for s in g.slots)


def test_extend_single_slot_is_the_graph(rng):
    W = random_adjacency(rng, 4)
    ext = extend_tridiagonal(TimeVaryingGraph([W]), [])
    np.testing.assert_array_equal(ext.adjacency, W)


def test_extend_tridiagonal_small_example():
    W = [[0, 1], [1, 0]]
    ext = extend_tridiagonal(TimeVaryingGraph([W, W]), [np.eye(2)])
    expected = [[0, 1, 1, 0], [1, 0, 0, 1], [1, 0, 0, 1], [0, 1, 1, 0]]
    np.testing.assert_array_equal(ext.adjacency, expected)
    assert ext.structure_tag == "block-tridiagonal"


def test_extend_tridiagonal_blocks_bit_equal(rng):
    slots = [random_adjacency(rng, 3) for _ in range(4)]
    bridges = [np.diag(rng.random(3)) for _ in range(3)]
    ext = extend_tridiagonal(TimeVaryingGraph(slots), bridges)
    for t, W in enumerate(slots):
        assert np.array_equal(ext.block(t, t), W)
    for t, B in enumerate(bridges, start=1):
        assert np.array_equal(ext.block(t, t - 1), B)
        assert np.array_equal(ext.block(t - 1, t), B.T)
    assert np.all(ext.block(0, 2) == 0)


def test_extend_tridiagonal_dimension_errors(rng):
    g = TimeVaryingGraph([random_adjacency(rng, 3)] * 3)
    with pytest.raises(ValueError):
        extend_tridiagonal(g, [np.eye(3)])
    with pytest.raises(ValueError):
        extend_tridiagonal(g, [np.eye(2)] * 2)


def test_kronecker_sum_zero_time_coupling(rng):
    W = random_adjacency(rng, 3)
    ext = extend_kronecker_sum(Graph(W), np.zeros((4, 4)))
    np.testing.assert_array_equal(ext.adjacency, np.kron(np.eye(4), W))


def test_kronecker_sum_path_ring():
    W = np.array([[0, 1], [1, 0]])
    T = 3
    ext = extend_kronecker_sum(Graph(W), path_adjacency(T))
    L_T, L_G = laplacian(path_adjacency(T)), laplacian(W)
    expected = np.kron(L_T, np.eye(2)) + np.kron(np.eye(T), L_G)
    np.testing.assert_allclose(ext.laplacian(), expected, atol=1e-15)


def test_kronecker_sum_rejects_bad_time_adjacency(rng):
    with pytest.raises(GraphValidationError):
        extend_kronecker_sum(Graph(random_adjacency(rng, 3)), [[0, 1], [0, 0]])


@pytest.mark.parametrize("seed", range(20))
def test_kronecker_sum_spectrum(seed):
    rng = np.random.default_rng(seed)
    W, W_T = random_adjacency(rng, 3), random_adjacency(rng, 4)
    ext = extend_kronecker_sum(Graph(W), W_T)
    lam_G, U_G = np.linalg.eigh(laplacian(W))
    lam_T, U_T = np.linalg.eigh(laplacian(W_T))
    got = np.sort(np.linalg.eigvalsh(ext.laplacian()))
    want = np.sort(np.add.outer(lam_T, lam_G).ravel())
    np.testing.assert_allclose(got, want, atol=1e-10)
    U = np.kron(U_T, U_G)
    D = U.T @ ext.laplacian() @ U
    assert np.max(np.abs(D - np.diag(np.diag(D)))) < 1e-10


def test_extended_laplacian_single_slot(rng):
    W = random_adjacency(rng, 4)
    np.testing.assert_array_equal(
        extended_laplacian_timevarying(TimeVaryingGraph([W]), []), laplacian(W))


@pytest.mark.parametrize("seed", range(10))
def test_extended_laplacian_matches_extended_graph(seed):
    rng = np.random.default_rng(seed)
    N, T = 4, 5
    slots = [random_adjacency(rng, N) for _ in range(T)]
    bridges = [rng.random((N, N)) for _ in range(T - 1)]
    g = TimeVaryingGraph(slots)
    np.testing.assert_allclose(extended_laplacian_timevarying(g, bridges),
                               extend_tridiagonal(g, bridges).laplacian(), atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_temporal_quadratic_form_scaled_identity(seed):
    rng = np.random.default_rng(seed)
    N, T, s = 4, 5, float(rng.uniform(0.1, 3))
    g = TimeVaryingGraph([np.zeros((N, N))] * T)
    L = extended_laplacian_timevarying(g, scaled_identity_bridges(N, T, s))
    for _ in range(20):
        F = rng.standard_normal((N, T))
        f = F.T.ravel()
        want = s * np.sum(np.diff(F, axis=1) ** 2)
        assert f @ L @ f == pytest.approx(want, rel=1e-10)


def test_pure_temporal_chain(rng):
    N, T = 3, 4
    g = TimeVaryingGraph([np.zeros((N, N))] * T)
    L = extended_laplacian_timevarying(g, [np.eye(N)] * (T - 1))
    F = rng.standard_normal((N, T))
    f = F.T.ravel()
    assert f @ L @ f == pytest.approx(np.sum(np.diff(F, axis=1) ** 2), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_quadratic_form_decomposition_diagonal_bridges(N, T, seed):
    rng = np.random.default_rng(seed)
    slots = [random_adjacency(rng, N) for _ in range(T)]
    bridges = [np.diag(rng.random(N)) for _ in range(T - 1)]
    L = extended_laplacian_timevarying(TimeVaryingGraph(slots), bridges)
    F = rng.standard_normal((N, T))
    f = F.T.ravel()
    want = sum(F[:, t] @ laplacian(slots[t]) @ F[:, t] for t in range(T))
    want += sum((F[:, t] - F[:, t - 1]) @ bridges[t - 1] @ (F[:, t] - F[:, t - 1])
                for t in range(1, T))
    assert f @ L @ f == pytest.approx(want, rel=1e-10, abs=1e-12)
