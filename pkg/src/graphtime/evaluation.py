"""Error metrics, synthetic data and parameter sweeps."""

import copy
import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .config import ConfigError, build_kernel, build_schedule, spatial_kernels
from .estimators import (
    batch_estimate,
    instantaneous_estimates,
    online_closedform_filtered,
)
from .graph import Graph, as_time_varying, scaled_identity_bridges, symmetrize
from .kernels import timevarying_kernel_blocks
from .kkf import run_kkf
from .observations import SamplingPlan, random_fixed_plan, random_plan, sample_signal

ESTIMATORS = ("kkf", "batch", "instantaneous", "online-closedform")


def cumulative_nmse(truth, estimates, plan, t):
    """Cumulative NMSE over the unobserved vertices of slots ``0..t``.

    ``sum ||S^c (f - f_hat)||^2 / sum ||S^c f||^2``. Returns NaN when the
    denominator is zero (every vertex sampled or a zero signal), which is
    kept distinct from a perfect score of 0.
    """
    return float(nmse_series(truth, estimates, plan)[t])


def nmse_series(truth, estimates, plan):
    """Cumulative NMSE for every slot, as an array of length T.

    Entries whose denominator is zero are NaN.
    """
    truth = np.asarray(truth, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if truth.shape != estimates.shape:
        raise ValueError(f"truth {truth.shape} and estimates {estimates.shape} differ")
    unobserved = ~plan.mask()
    if unobserved.shape != truth.shape:
        raise ValueError("plan does not match the signal shape")
    num = np.cumsum(np.sum(np.where(unobserved, (truth - estimates) ** 2, 0.0), axis=0))
    den = np.cumsum(np.sum(np.where(unobserved, truth ** 2, 0.0), axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def random_knn_graph(n_vertices, k, rng, bandwidth=None):
    """Symmetrized k-nearest-neighbour graph over uniform points in the unit
    square, with Gaussian weights ``exp(-d^2 / bandwidth^2)``."""
    rng = np.random.default_rng(rng)
    pts = rng.random((n_vertices, 2))
    k = min(k, n_vertices - 1)
    dist, nbr = cKDTree(pts).query(pts, k=k + 1)
    bandwidth = np.mean(dist[:, 1:]) if bandwidth is None else bandwidth
    W = np.zeros((n_vertices, n_vertices))
    rows = np.repeat(np.arange(n_vertices), k)
    W[rows, nbr[:, 1:].ravel()] = np.exp(-(dist[:, 1:].ravel() / bandwidth) ** 2)
    W = np.maximum(W, W.T)
    return Graph(symmetrize(W))


def _block_tridiagonal_to_upper_banded(diag_blocks, sub_blocks):
    T = len(diag_blocks)
    N = diag_blocks[0].shape[0]
    u = 2 * N - 1 if T > 1 else N - 1
    ab = np.zeros((u + 1, N * T))
    a, c = np.triu_indices(N)
    aa, cc = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    for t in range(T):
        i, j = t * N + a, t * N + c
        ab[u + i - j, j] = diag_blocks[t][a, c]
        if t + 1 < T:
            # block (t, t+1) is the transpose of the sub-diagonal block (t+1, t)
            i, j = t * N + aa.ravel(), (t + 1) * N + cc.ravel()
            ab[u + i - j, j] = sub_blocks[t].T[aa.ravel(), cc.ravel()]
    return ab, u


def generate_smooth_signal(graph, spatial_map, temporal_smoothness, seed=None,
                           n_slots=None):
    """Draw an ``(N, T)`` signal whose covariance is the time-varying
    space-time kernel with bridges ``s I``.

    White noise is mapped through the inverse of the banded Cholesky factor
    of the inverse kernel, so ``E[f.T K^{-1} f] = N T``.

    Parameters
    ----------
    graph : TimeVaryingGraph, Graph or adjacency
        Static graphs need ``n_slots``.
    spatial_map : SpectralMap or sequence of SpectralMap
    temporal_smoothness : float
        Bridge weight ``s > 0``; larger means slower variation in time.
    seed : int or Generator
    """
    if not temporal_smoothness > 0:
        raise ValueError("temporal_smoothness must be positive")
    graph = as_time_varying(graph, n_slots)
    N, T = graph.n_vertices, graph.n_slots
    blocks = timevarying_kernel_blocks(
        graph, spatial_map, scaled_identity_bridges(N, T, temporal_smoothness))
    ab, u = _block_tridiagonal_to_upper_banded(*blocks)
    U = linalg.cholesky_banded(ab, lower=False)
    z = np.random.default_rng(seed).standard_normal(N * T)
    f = linalg.solve_banded((0, u), U, z)
    return f.reshape(T, N).T


@dataclass
class ExperimentConfig:
    """One reconstruction experiment on synthetic data.

    ``data`` describes the synthetic generator::

        {"n_vertices": 50, "n_slots": 100, "k": 7, "graph_seed": 0,
         "spatial": {"family": "diffusion", "sigma2": 1.0}, "s": 1.0}

    ``sampling`` is ``{"type": "fixed-random", "m": 20}``,
    ``{"type": "per-slot-random", "m": 20}`` or
    ``{"type": "lists", "indices": [[...], ...]}``.
    """

    estimator: str = "kkf"
    kernel: dict = field(default_factory=lambda: {
        "type": "timevarying",
        "spatial": {"family": "diffusion", "sigma2": 1.0},
        "bridges": {"type": "scaled-identity", "s": 1.0}})
    mu: float = 1e-3
    sampling: dict = field(default_factory=lambda: {"type": "fixed-random", "m": 10})
    noise_std: float = 0.0
    seed: int = 0
    data: dict = field(default_factory=lambda: {
        "n_vertices": 20, "n_slots": 30, "k": 5, "graph_seed": 0,
        "spatial": {"family": "diffusion", "sigma2": 1.0}, "s": 1.0})

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}", "estimator")
        if not (isinstance(self.mu, (int, float)) and self.mu > 0):
            raise ConfigError("mu must be a positive number", "mu")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative", "noise_std")

    def to_dict(self):
        return asdict(self)

    def config_id(self):
        """Short digest of the config with the seed left out."""
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def make_plan(spec, n_vertices, n_slots, rng):
    kind = spec.get("type", "fixed-random")
    if kind == "lists":
        return SamplingPlan(n_vertices, tuple(spec["indices"]))
    m = spec.get("m")
    if not isinstance(m, int) or not 0 <= m <= n_vertices:
        raise ConfigError(f"m must be an integer in [0, {n_vertices}]", "sampling.m")
    if kind == "fixed-random":
        return random_fixed_plan(n_vertices, n_slots, m, rng)
    if kind == "per-slot-random":
        return random_plan(n_vertices, n_slots, m, rng)
    raise ConfigError(f"unknown sampling type {kind!r}", "sampling.type")


def synthetic_dataset(data, seed):
    """``(graph, truth)`` for a synthetic data spec and seed."""
    from .config import spectral_map

    N, T = int(data["n_vertices"]), int(data["n_slots"])
    graph = random_knn_graph(N, int(data.get("k", 5)), data.get("graph_seed", seed))
    truth = generate_smooth_signal(graph, spectral_map(data["spatial"], "data.spatial"),
                                   float(data["s"]), seed=seed, n_slots=T)
    return graph, truth


def reconstruct(estimator, graph, obs, plan, kernel_spec, mu):
    """Run one estimator and return the ``(N, T)`` present-time estimates."""
    T = plan.n_slots
    if estimator == "instantaneous":
        return instantaneous_estimates(obs, plan, spatial_kernels(kernel_spec, graph, T), mu).values
    if estimator == "kkf":
        schedule = build_schedule(kernel_spec, graph, T)
        return run_kkf(None, obs, plan, mu, schedule=schedule).values
    kernel = build_kernel(kernel_spec, graph, T)
    if estimator == "batch":
        return batch_estimate(obs, plan, kernel, mu).values
    return online_closedform_filtered(obs, plan, kernel, mu).values


@dataclass
class RunResult:
    config_id: str
    seed: int
    nmse: np.ndarray = None
    wall_ms: float = float("nan")
    error: str = None


def run_experiment(config):
    """Generate data, reconstruct and score one config. Failures are caught
    and reported in ``RunResult.error``."""
    cid = config.config_id()
    try:
        rng = np.random.default_rng(config.seed)
        graph, truth = synthetic_dataset(config.data, config.seed)
        N, T = truth.shape
        plan = make_plan(config.sampling, N, T, rng)
        obs = sample_signal(truth, plan, config.noise_std, rng)
        start = time.perf_counter()
        F = reconstruct(config.estimator, graph, obs, plan, config.kernel, config.mu)
        wall = (time.perf_counter() - start) * 1e3
        return RunResult(cid, config.seed, nmse_series(truth, F, plan), wall)
    except Exception as exc:  # noqa: BLE001 - a sweep records and moves on
        return RunResult(cid, config.seed, error=f"{type(exc).__name__}: {exc}")


def default_workers():
    try:
        return max(1, int(os.environ.get("GRAPHTIME_THREADS", "1")))
    except ValueError:
        return 1


def sweep(configs, workers=None, on_result=None):
    """Run every config; results come back in input order.

    Parameters
    ----------
    configs : iterable of ExperimentConfig
    workers : int, optional
        Process pool size; defaults to ``$GRAPHTIME_THREADS`` or 1.
    on_result : callable, optional
        Called with each RunResult as soon as it is available (input order).
    """
    configs = list(configs)
    workers = default_workers() if workers is None else max(1, int(workers))
    results = []
    if workers == 1 or len(configs) <= 1:
        it = map(run_experiment, configs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        it = pool.map(run_experiment, configs)
    try:
        for r in it:
            if on_result is not None:
                on_result(r)
            results.append(r)
    finally:
        if pool is not None:
            pool.shutdown()
    return results


def grid(base, **axes):
    """Cartesian product of ``base`` with the given field values.

    Field names may be dotted to reach into dict fields, e.g.
    ``grid(cfg, **{"kernel.bridges.s": [0.1, 1.0], "seed": range(5)})``.
    """
    keys = list(axes)
    out = []
    for values in itertools.product(*(axes[k] for k in keys)):
        d = copy.deepcopy(base.to_dict())
        for key, value in zip(keys, values):
            *path, last = key.split(".")
            target = d
            for p in path:
                target = target[p]
            target[last] = value
        out.append(ExperimentConfig(**d))
    return out
