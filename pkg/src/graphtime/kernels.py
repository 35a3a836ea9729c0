"""Laplacian kernels and space-time kernels.

Kernels are stored mostly through their inverses, since that is where the
block-tridiagonal structure needed by the Kalman recursion lives.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .graph import (
    as_time_varying,
    assemble_block_tridiagonal,
    laplacian,
    temporal_laplacian_blocks,
)

SPECTRAL_FAMILIES = {
    "diffusion": ("sigma2",),
    "p-step-random-walk": ("a", "p"),
    "regularized-laplacian": ("sigma2",),
    "bandlimited": ("beta", "lambda_max"),
    "shifted-identity": ("epsilon",),
}

_DEFAULTS = {
    "regularized-laplacian": {"sigma2": 1.0},
    "bandlimited": {"beta": 100.0},
}

#: Relative tolerance below which off-band blocks count as zero.
STRUCTURE_TOL = 1e-10

#: Absolute slack when testing an eigenvalue against a bandlimited cutoff.
BAND_TOL = 1e-10


class KernelError(ValueError):
    """A kernel factor or parameter violating its contract."""


@dataclass(frozen=True)
class SpectralMap:
    """Strictly positive map ``r(lambda)`` turning Laplacian eigenvalues into
    inverse-kernel eigenvalues.

    Families and parameters:

    ``diffusion``               exp(sigma2 * lam / 2), sigma2 >= 0
    ``p-step-random-walk``      (a - lam) ** -p, a >= 2, integer p >= 1
    ``regularized-laplacian``   1 + sigma2 * lam, sigma2 > 0 (default 1)
    ``bandlimited``             1/beta if lam <= lambda_max else beta,
                                beta > 0 (default 100)
    ``shifted-identity``        lam + epsilon, epsilon > 0

    Examples
    --------
    >>> r = SpectralMap("regularized-laplacian", sigma2=1.0)
    >>> r(np.array([0.0, 2.0]))
    array([1., 3.])
    """

    family: str
    params: dict = field(default_factory=dict)

    def __init__(self, family, **params):
        if family not in SPECTRAL_FAMILIES:
            raise KernelError(
                f"unknown spectral family {family!r}; expected one of "
                f"{sorted(SPECTRAL_FAMILIES)}")
        merged = dict(_DEFAULTS.get(family, {}))
        merged.update(params)
        expected = set(SPECTRAL_FAMILIES[family])
        missing = expected - merged.keys()
        extra = merged.keys() - expected
        if missing:
            raise KernelError(f"{family} map needs parameter(s) {sorted(missing)}")
        if extra:
            raise KernelError(f"{family} map got unexpected parameter(s) {sorted(extra)}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", {k: float(v) for k, v in merged.items()})
        self._validate()

    def _validate(self):
        p = self.params
        if self.family == "diffusion" and not p["sigma2"] >= 0:
            raise KernelError("diffusion needs sigma2 >= 0")
        if self.family == "p-step-random-walk":
            if not p["a"] >= 2:
                raise KernelError("random-walk map needs a >= 2")
            if p["p"] < 1 or p["p"] != int(p["p"]):
                raise KernelError("random-walk map needs a positive integer p")
        if self.family == "regularized-laplacian" and not p["sigma2"] > 0:
            raise KernelError("regularized-laplacian needs sigma2 > 0")
        if self.family == "bandlimited":
            if not p["beta"] > 0:
                raise KernelError("bandlimited map needs beta > 0")
            if not p["lambda_max"] >= 0:
                raise KernelError("bandlimited map needs lambda_max >= 0")
        if self.family == "shifted-identity" and not p["epsilon"] > 0:
            raise KernelError("shifted-identity needs epsilon > 0")

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items()))))

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        p = self.params
        if self.family == "diffusion":
            out = np.exp(p["sigma2"] * lam / 2.0)
        elif self.family == "p-step-random-walk":
            if np.any(lam >= p["a"]):
                raise KernelError(
                    f"random-walk map is only positive for lambda < a = {p['a']}; "
                    f"got lambda = {float(np.max(lam))}")
            out = (p["a"] - lam) ** (-int(p["p"]))
        elif self.family == "regularized-laplacian":
            out = 1.0 + p["sigma2"] * lam
        elif self.family == "bandlimited":
            # round-off puts the zero eigenvalue slightly above 0
            out = np.where(lam <= p["lambda_max"] + BAND_TOL, 1.0 / p["beta"], p["beta"])
        else:
            out = lam + p["epsilon"]
        if not np.all(np.isfinite(out)) or np.any(out <= 0):
            raise KernelError(f"{self.family} map produced a non-positive or "
                              "non-finite value")
        return out

    @classmethod
    def from_config(cls, config):
        """Build from ``{"family": ..., <params>}``.

        ``sigma`` is accepted for the diffusion and regularized maps and
        squared into ``sigma2``.
        """
        config = dict(config)
        try:
            family = config.pop("family")
        except KeyError:
            raise KernelError("spectral map config needs a 'family' field") from None
        if "sigma" in config:
            if "sigma2" in config:
                raise KernelError("give either sigma or sigma2, not both")
            config["sigma2"] = float(config.pop("sigma")) ** 2
        return cls(family, **config)

    def to_config(self):
        return {"family": self.family, **self.params}


def sorted_eigh(S):
    """Eigendecomposition of a symmetric matrix, ascending, sign-normalized.

    Each eigenvector is flipped so that its first entry of magnitude above
    1e-12 is positive, which makes the frequency basis reproducible.
    """
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise KernelError("cannot eigendecompose a matrix with non-finite entries")
    w, U = linalg.eigh((S + S.T) / 2.0)
    order = np.argsort(w, kind="stable")
    w, U = w[order], U[:, order]
    lead = np.argmax(np.abs(U) > 1e-12, axis=0)
    signs = np.sign(U[lead, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return w, U * signs


def laplacian_kernel_inverse(L, spectral_map):
    """Inverse Laplacian kernel ``U diag(r(lambda)) U.T``.

    Eigenvalues are clipped at zero before applying the map, since ``L`` is
    PSD and round-off can push the smallest one slightly negative.
    """
    w, U = sorted_eigh(L)
    r = spectral_map(np.clip(w, 0.0, None))
    K_inv = (U * r) @ U.T
    return (K_inv + K_inv.T) / 2.0


def laplacian_kernel(L, spectral_map):
    """Laplacian kernel ``U diag(1 / r(lambda)) U.T``."""
    w, U = sorted_eigh(L)
    r = spectral_map(np.clip(w, 0.0, None))
    K = (U / r) @ U.T
    return (K + K.T) / 2.0


def _cholesky(A, what):
    try:
        return linalg.cho_factor(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        raise KernelError(f"{what} is not symmetric positive definite") from None


def _check_spd(A, what):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise KernelError(f"{what} must be square, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), 1.0)
    if np.max(np.abs(A - A.T)) > 1e-9 * scale:
        raise KernelError(f"{what} is not symmetric")
    _cholesky(A, what)
    return (A + A.T) / 2.0


def matrix_bandwidth(A, tol=STRUCTURE_TOL):
    """Largest ``|i - j|`` with ``|A[i, j]| > tol * max|A|``."""
    A = np.asarray(A)
    scale = np.max(np.abs(A))
    if scale == 0:
        return 0
    i, j = np.nonzero(np.abs(A) > tol * scale)
    return int(np.max(np.abs(i - j)))


def block_bandwidth(A, n_vertices, tol=STRUCTURE_TOL):
    """Number of non-zero block off-diagonals of a matrix with (N, N) blocks."""
    A = np.asarray(A)
    scale = np.max(np.abs(A))
    if scale == 0:
        return 0
    i, j = np.nonzero(np.abs(A) > tol * scale)
    return int(np.max(np.abs(i // n_vertices - j // n_vertices)))


@dataclass(frozen=True, eq=False)
class SpaceTimeKernel:
    """Space-time kernel on ``n_vertices * n_slots`` replicas.

    Parameters
    ----------
    n_vertices, n_slots : int
    data : ndarray of shape (N*T, N*T)
        The kernel itself (``matrix_form="kernel"``) or its inverse
        (``matrix_form="inverse"``).
    matrix_form : {"kernel", "inverse"}
    tridiagonal_inverse : bool
        Whether the inverse is block tridiagonal with (N, N) blocks.
    block_bandwidth : int
        Number of non-zero block off-diagonals of the inverse (at least 1).
    description : dict
        Free-form provenance, e.g. the config the kernel was built from.
    """

    n_vertices: int
    n_slots: int
    data: np.ndarray
    matrix_form: str = "inverse"
    tridiagonal_inverse: bool = False
    block_bandwidth: int = 1
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix_form not in ("kernel", "inverse"):
            raise KernelError(f"unknown matrix_form {self.matrix_form!r}")
        A = np.array(self.data, dtype=float)
        size = self.n_vertices * self.n_slots
        if A.shape != (size, size):
            raise KernelError(f"kernel data has shape {A.shape}, expected ({size}, {size})")
        scale = max(np.max(np.abs(A)), 1.0)
        if np.max(np.abs(A - A.T)) > 1e-9 * scale:
            raise KernelError("kernel data is not symmetric")
        A = (A + A.T) / 2.0
        A.setflags(write=False)
        object.__setattr__(self, "data", A)
        object.__setattr__(self, "block_bandwidth", max(int(self.block_bandwidth), 1))

    @property
    def size(self):
        return self.n_vertices * self.n_slots

    @cached_property
    def _factor(self):
        return _cholesky(self.data, "space-time kernel")

    @cached_property
    def inverse_matrix(self):
        """The inverse kernel as a dense array (cached)."""
        if self.matrix_form == "inverse":
            return self.data
        return self._invert()

    @cached_property
    def kernel_matrix(self):
        """The kernel as a dense array (cached)."""
        if self.matrix_form == "kernel":
            return self.data
        return self._invert()

    def _invert(self):
        A = linalg.cho_solve(self._factor, np.eye(self.size))
        A = (A + A.T) / 2.0
        A.setflags(write=False)
        return A

    def inverse_block(self, t, s):
        N = self.n_vertices
        return self.inverse_matrix[t * N:(t + 1) * N, s * N:(s + 1) * N]

    def inverse_blocks(self):
        """Diagonal blocks ``D[t]`` and sub-diagonal blocks ``E[t]`` (at (t, t-1))
        of the inverse kernel."""
        T = self.n_slots
        return ([self.inverse_block(t, t) for t in range(T)],
                [self.inverse_block(t, t - 1) for t in range(1, T)])

    def min_eigenvalue(self):
        w = linalg.eigvalsh(self.data)
        return float(w[0]) if self.matrix_form == "inverse" else float(1.0 / w[-1])


def kronecker_product_kernel(K_time, K_space):
    """Kronecker product kernel ``K_T (x) K_G`` stored explicitly.

    The inverse is flagged block tridiagonal when ``K_T^{-1}`` is
    tridiagonal; its block bandwidth equals the bandwidth of ``K_T^{-1}``.
    """
    K_time = _check_spd(K_time, "temporal kernel")
    K_space = _check_spd(K_space, "spatial kernel")
    Kt_inv = linalg.cho_solve(_cholesky(K_time, "temporal kernel"), np.eye(K_time.shape[0]))
    bw = matrix_bandwidth(Kt_inv)
    return SpaceTimeKernel(
        K_space.shape[0], K_time.shape[0], np.kron(K_time, K_space),
        matrix_form="kernel", tridiagonal_inverse=bw <= 1, block_bandwidth=bw,
        description={"type": "kronecker-product"})


def kronecker_sum_kernel_inverse(Kinv_time, Kinv_space):
    """Kronecker sum ``K_T^{-1} (+) K_G^{-1}`` stored as the inverse kernel."""
    Kinv_time = _check_spd(Kinv_time, "temporal inverse kernel")
    Kinv_space = _check_spd(Kinv_space, "spatial inverse kernel")
    T, N = Kinv_time.shape[0], Kinv_space.shape[0]
    data = np.kron(Kinv_time, np.eye(N)) + np.kron(np.eye(T), Kinv_space)
    bw = matrix_bandwidth(Kinv_time)
    return SpaceTimeKernel(
        N, T, data, matrix_form="inverse", tridiagonal_inverse=bw <= 1,
        block_bandwidth=bw, description={"type": "kronecker-sum"})


def _check_orthogonal(U, what):
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise KernelError(f"{what} must be square")
    if np.max(np.abs(U.T @ U - np.eye(U.shape[0]))) > 1e-8:
        raise KernelError(f"{what} is not orthogonal")
    return U


def doubly_selective_kernel_inverse(U_time, U_space, weights):
    """Inverse kernel with an independent weight per (spatial, temporal)
    frequency pair.

    Parameters
    ----------
    U_time : ndarray of shape (T, T), orthogonal
    U_space : ndarray of shape (N, N), orthogonal
    weights : ndarray of shape (N, T), strictly positive
        ``weights[n, k]`` penalizes spatial frequency ``n`` at temporal
        frequency ``k``.

    Returns
    -------
    SpaceTimeKernel
        ``(U_T (x) U_G) diag(vec(weights)) (U_T (x) U_G).T`` with column-major
        ``vec``, matching the time-major stacking of signals.
    """
    U_time = _check_orthogonal(U_time, "temporal basis")
    U_space = _check_orthogonal(U_space, "spatial basis")
    R = np.asarray(weights, dtype=float)
    N, T = U_space.shape[0], U_time.shape[0]
    if R.shape != (N, T):
        raise KernelError(f"weights must have shape ({N}, {T}), got {R.shape}")
    if not np.all(np.isfinite(R)) or np.any(R <= 0):
        raise KernelError("weights must be finite and strictly positive")
    U = np.kron(U_time, U_space)
    data = (U * R.ravel(order="F")) @ U.T
    bw = block_bandwidth(data, N)
    return SpaceTimeKernel(
        N, T, data, matrix_form="inverse", tridiagonal_inverse=bw <= 1,
        block_bandwidth=bw, description={"type": "doubly-selective"})


def _as_map_sequence(maps, n_slots):
    if isinstance(maps, SpectralMap):
        return [maps] * n_slots
    maps = list(maps)
    if len(maps) != n_slots:
        raise KernelError(f"expected {n_slots} spectral maps, got {len(maps)}")
    return maps


def timevarying_kernel_blocks(graph, maps, bridges, n_slots=None):
    """Blocks of the time-varying-topology inverse kernel.

    Returns ``(diag_blocks, sub_blocks)`` with
    ``diag_blocks[t] = r_t(L[t]) + diag(b[t])`` and ``sub_blocks[t-1] = -B[t]``.
    Repeated slot graphs and maps reuse one eigendecomposition, so long
    horizons over a fixed topology stay cheap.
    """
    graph = as_time_varying(graph, n_slots)
    N, T = graph.n_vertices, graph.n_slots
    maps = _as_map_sequence(maps, T)
    temporal_diag, sub_blocks = temporal_laplacian_blocks(bridges, N, T)
    cache = {}
    diag_blocks = []
    for t in range(T):
        key = (id(graph.slots[t]), maps[t])
        if key not in cache:
            cache[key] = laplacian_kernel_inverse(laplacian(graph.slots[t]), maps[t])
        diag_blocks.append(cache[key] + temporal_diag[t])
    return diag_blocks, sub_blocks


def timevarying_kernel_inverse(graph, maps, bridges, n_slots=None):
    """Space-time inverse kernel for time-varying topologies.

    ``bdiag(r_t(L[t])) + btridiag(diag(b[t]); -B[t])``: a per-slot Laplacian
    kernel plus the Laplacian of the bridge edges. Always block tridiagonal.

    Parameters
    ----------
    graph : TimeVaryingGraph, Graph or adjacency
        Static graphs need ``n_slots``.
    maps : SpectralMap or sequence of T SpectralMap
    bridges : sequence of ``T - 1`` non-negative (N, N) arrays
    """
    graph = as_time_varying(graph, n_slots)
    diag_blocks, sub_blocks = timevarying_kernel_blocks(graph, maps, bridges)
    data = assemble_block_tridiagonal(diag_blocks, sub_blocks)
    return SpaceTimeKernel(
        graph.n_vertices, graph.n_slots, data, matrix_form="inverse",
        tridiagonal_inverse=True, block_bandwidth=1,
        description={"type": "timevarying"})
