"""Static and time-varying graphs, Laplacians and extended graphs.

Extended graphs live on ``N * T`` vertex replicas ordered time-major:
vertex ``n`` at slot ``t`` has index ``t * N + n``, so a stacked signal
is ``[f[0], f[1], ..., f[T-1]]``.
"""

from dataclasses import dataclass

import numpy as np

#: Absolute tolerance for symmetry, diagonal and sign checks on adjacencies.
ADJACENCY_TOL = 1e-9

STRUCTURE_TAGS = ("block-tridiagonal", "kronecker-sum", "general")


class GraphValidationError(ValueError):
    """Adjacency matrix violating the undirected, non-negative contract.

    ``row`` and ``col`` locate the first offending entry when there is one.
    """

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


def check_adjacency(adjacency, name="adjacency", tol=ADJACENCY_TOL):
    """Validate an adjacency matrix and return it as a float array.

    Parameters
    ----------
    adjacency : array-like of shape (n, n)
    name : str
        Used in error messages.
    tol : float
        Absolute tolerance for symmetry, zero diagonal and non-negativity.

    Raises
    ------
    GraphValidationError
        On the first violated invariant, with its row/col (0-based).
    """
    A = np.array(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphValidationError(f"{name} must be square, got shape {A.shape}")
    if A.shape[0] == 0:
        raise GraphValidationError(f"{name} must have at least one vertex")
    bad = np.argwhere(~np.isfinite(A))
    if bad.size:
        i, j = bad[0]
        raise GraphValidationError(
            f"{name} has a non-finite entry at row {i}, col {j}", int(i), int(j))
    bad = np.argwhere(np.abs(A - A.T) > tol)
    if bad.size:
        i, j = bad[0]
        raise GraphValidationError(
            f"{name} is not symmetric at row {i}, col {j}: {float(A[i, j])!r} vs "
            f"{float(A[j, i])!r} at row {j}, col {i}", int(i), int(j))
    bad = np.flatnonzero(np.abs(np.diag(A)) > tol)
    if bad.size:
        i = bad[0]
        raise GraphValidationError(
            f"{name} has a self-loop at row {i}, col {i}", int(i), int(i))
    bad = np.argwhere(A < -tol)
    if bad.size:
        i, j = bad[0]
        raise GraphValidationError(
            f"{name} has a negative weight at row {i}, col {j}", int(i), int(j))
    return A


def _readonly(A):
    A = np.array(A, dtype=float)
    A.setflags(write=False)
    return A


def symmetrize(adjacency):
    """Return ``(A + A.T) / 2`` with the diagonal zeroed.

    Meant for noisy adjacency data; graphs never symmetrize on their own.
    """
    A = np.asarray(adjacency, dtype=float)
    A = (A + A.T) / 2.0
    np.fill_diagonal(A, 0.0)
    return A


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph with non-negative weights.

    Parameters
    ----------
    adjacency : array-like of shape (n_vertices, n_vertices)
        Symmetric, zero diagonal, non-negative. Validated, not repaired.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _readonly(check_adjacency(self.adjacency)))

    @property
    def n_vertices(self):
        return self.adjacency.shape[0]

    def laplacian(self):
        return laplacian(self)


@dataclass(frozen=True, eq=False)
class TimeVaryingGraph:
    """Sequence of adjacency matrices over a common vertex set."""

    slots: tuple

    def __post_init__(self):
        slots = tuple(self.slots)
        if not slots:
            raise GraphValidationError("a time-varying graph needs at least one slot")
        checked = []
        seen = {}
        for t, W in enumerate(slots):
            # repeated slot objects share one validated array
            if id(W) in seen:
                checked.append(seen[id(W)])
                continue
            A = check_adjacency(W, name=f"adjacency of slot {t}")
            if checked and A.shape != checked[0].shape:
                raise GraphValidationError(
                    f"slot {t} has {A.shape[0]} vertices, expected {checked[0].shape[0]}")
            seen[id(W)] = _readonly(A)
            checked.append(seen[id(W)])
        object.__setattr__(self, "slots", tuple(checked))

    @classmethod
    def constant(cls, graph, n_slots):
        """Repeat a static graph (or adjacency) over ``n_slots`` slots."""
        W = graph.adjacency if isinstance(graph, Graph) else graph
        return cls((W,) * int(n_slots))

    @property
    def n_vertices(self):
        return self.slots[0].shape[0]

    @property
    def n_slots(self):
        return len(self.slots)

    def is_time_invariant(self):
        first = self.slots[0]
        return all(W is first or np.array_equal(W, first) for W in self.slots[1:])

    def __getitem__(self, t):
        return Graph(self.slots[t])


@dataclass(frozen=True, eq=False)
class ExtendedGraph:
    """Graph on ``n_vertices * n_slots`` space-time replicas."""

    n_vertices: int
    n_slots: int
    adjacency: np.ndarray
    structure_tag: str = "general"

    def __post_init__(self):
        if self.structure_tag not in STRUCTURE_TAGS:
            raise ValueError(f"unknown structure_tag {self.structure_tag!r}")
        A = check_adjacency(self.adjacency, name="extended adjacency")
        if A.shape[0] != self.n_vertices * self.n_slots:
            raise GraphValidationError(
                f"extended adjacency has size {A.shape[0]}, expected "
                f"{self.n_vertices} * {self.n_slots}")
        object.__setattr__(self, "adjacency", _readonly(A))

    def block(self, t, s):
        N = self.n_vertices
        return self.adjacency[t * N:(t + 1) * N, s * N:(s + 1) * N]

    def laplacian(self):
        return laplacian(self.adjacency)


def as_time_varying(graph, n_slots=None):
    """Coerce a Graph, adjacency array or TimeVaryingGraph to a TimeVaryingGraph."""
    if isinstance(graph, TimeVaryingGraph):
        if n_slots is not None and graph.n_slots != n_slots:
            raise ValueError(f"graph has {graph.n_slots} slots, expected {n_slots}")
        return graph
    if n_slots is None:
        raise ValueError("n_slots is required for a static graph")
    return TimeVaryingGraph.constant(graph, n_slots)


def laplacian(graph):
    """Combinatorial Laplacian ``diag(W 1) - W``.

    Accepts a :class:`Graph`, :class:`ExtendedGraph` or a validated
    adjacency array.
    """
    W = graph.adjacency if hasattr(graph, "adjacency") else np.asarray(graph, dtype=float)
    L = -W.copy()
    L[np.diag_indices_from(L)] += W.sum(axis=1)
    return L


def path_adjacency(n):
    """Adjacency of the path graph on ``n`` vertices (consecutive slots linked)."""
    A = np.zeros((n, n))
    i = np.arange(n - 1)
    A[i, i + 1] = A[i + 1, i] = 1.0
    return A


def _check_bridges(bridges, n_vertices, n_slots):
    bridges = [np.asarray(B, dtype=float) for B in bridges]
    if len(bridges) != n_slots - 1:
        raise ValueError(f"expected {n_slots - 1} bridge matrices, got {len(bridges)}")
    for t, B in enumerate(bridges, start=1):
        if B.shape != (n_vertices, n_vertices):
            raise ValueError(
                f"bridge into slot {t} has shape {B.shape}, expected "
                f"({n_vertices}, {n_vertices})")
        if not np.all(np.isfinite(B)) or np.any(B < -ADJACENCY_TOL):
            raise ValueError(f"bridge into slot {t} must be finite and non-negative")
    return bridges


def scaled_identity_bridges(n_vertices, n_slots, s):
    """Bridges ``B[t] = s I`` linking each vertex to its own replicas."""
    if s < 0:
        raise ValueError("bridge scale s must be non-negative")
    B = s * np.eye(n_vertices)
    return [B] * (n_slots - 1)


def bridge_degree_vectors(bridges, n_vertices, n_slots):
    """Per-slot temporal degrees ``b[t]`` of the bridge edges.

    ``b[0] = B[1].T 1``, ``b[t] = (B[t+1].T + B[t]) 1`` inside, and
    ``b[T-1] = B[T-1] 1``, with ``bridges[t-1]`` the bridge into slot ``t``.
    """
    bridges = _check_bridges(bridges, n_vertices, n_slots)
    b = np.zeros((n_slots, n_vertices))
    for t, B in enumerate(bridges, start=1):
        b[t] += B.sum(axis=1)
        b[t - 1] += B.sum(axis=0)
    return b


def temporal_laplacian_blocks(bridges, n_vertices, n_slots):
    """Diagonal and sub-diagonal blocks of the bridge-only Laplacian.

    Returns ``(diag_blocks, sub_blocks)`` where ``diag_blocks[t] = diag(b[t])``
    and ``sub_blocks[t-1] = -B[t]`` sits at block (t, t-1).
    """
    bridges = _check_bridges(bridges, n_vertices, n_slots)
    b = bridge_degree_vectors(bridges, n_vertices, n_slots)
    return [np.diag(v) for v in b], [-B for B in bridges]


def assemble_block_tridiagonal(diag_blocks, sub_blocks):
    """Dense symmetric matrix from diagonal and sub-diagonal blocks.

    ``sub_blocks[t-1]`` is placed at block (t, t-1) and its transpose at
    (t-1, t).
    """
    T = len(diag_blocks)
    N = np.shape(diag_blocks[0])[0]
    A = np.zeros((N * T, N * T))
    for t, Dt in enumerate(diag_blocks):
        A[t * N:(t + 1) * N, t * N:(t + 1) * N] = Dt
    for t, Et in enumerate(sub_blocks, start=1):
        A[t * N:(t + 1) * N, (t - 1) * N:t * N] = Et
        A[(t - 1) * N:t * N, t * N:(t + 1) * N] = np.transpose(Et)
    return A


def extend_tridiagonal(graph, bridges):
    """Extended graph with slot graphs on the diagonal and bridges between slots.

    Parameters
    ----------
    graph : TimeVaryingGraph
    bridges : sequence of ``T - 1`` non-negative (N, N) arrays
        ``bridges[t-1]`` connects slot ``t-1`` to slot ``t``; it is placed
        on the sub-diagonal block (t, t-1), its transpose above.
    """
    graph = as_time_varying(graph)
    bridges = _check_bridges(bridges, graph.n_vertices, graph.n_slots)
    A = assemble_block_tridiagonal(list(graph.slots), bridges)
    return ExtendedGraph(graph.n_vertices, graph.n_slots, A, "block-tridiagonal")


def extend_kronecker_sum(graph, time_adjacency):
    """Cartesian-product extension ``W_T (x) I_N + I_T (x) W``."""
    W = graph.adjacency if isinstance(graph, Graph) else Graph(graph).adjacency
    W_T = check_adjacency(time_adjacency, name="time adjacency")
    N, T = W.shape[0], W_T.shape[0]
    A = np.kron(W_T, np.eye(N)) + np.kron(np.eye(T), W)
    return ExtendedGraph(N, T, A, "kronecker-sum")


def extended_laplacian_timevarying(graph, bridges):
    """Laplacian of the block-tridiagonal extension, built blockwise.

    ``bdiag(L[0..T-1]) + btridiag(diag(b[t]); -B[t])``; equal to the
    Laplacian of :func:`extend_tridiagonal` for any non-negative bridges.
    """
    graph = as_time_varying(graph)
    N, T = graph.n_vertices, graph.n_slots
    diag_blocks, sub_blocks = temporal_laplacian_blocks(bridges, N, T)
    diag_blocks = [laplacian(W) + Dt for W, Dt in zip(graph.slots, diag_blocks)]
    return assemble_block_tridiagonal(diag_blocks, sub_blocks)
