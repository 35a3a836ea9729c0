"""Build kernels and schedules from JSON-style kernel specs.

A kernel spec looks like::

    {"type": "timevarying",
     "spatial": {"family": "diffusion", "sigma2": 3.24},
     "bridges": {"type": "scaled-identity", "s": 0.01}}

    {"type": "kronecker-product" | "kronecker-sum",
     "temporal": {"family": "shifted-identity", "epsilon": 0.1},
     "spatial": {"family": "regularized-laplacian", "sigma2": 1.0}}

``spatial`` may also be a list with one map per slot (time-varying kernels
only). Kronecker kernels apply the temporal map to the Laplacian of the
path graph over the slots unless ``time_adjacency`` gives another one.
"""

import numpy as np

from .graph import as_time_varying, laplacian, path_adjacency, scaled_identity_bridges
from .kernels import (
    KernelError,
    SpectralMap,
    kronecker_product_kernel,
    kronecker_sum_kernel_inverse,
    laplacian_kernel,
    laplacian_kernel_inverse,
    timevarying_kernel_blocks,
    timevarying_kernel_inverse,
)
from .kkf import schedule_from_blocks, schedule_from_inverse_kernel, steady_state_schedule

KERNEL_TYPES = ("timevarying", "kronecker-product", "kronecker-sum")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


def spectral_map(spec, field="kernel.spatial"):
    if isinstance(spec, SpectralMap):
        return spec
    if not isinstance(spec, dict):
        raise ConfigError("expected an object with a 'family' field", field)
    try:
        return SpectralMap.from_config(spec)
    except KernelError as exc:
        raise ConfigError(str(exc), field) from None


def _spatial_maps(spec, n_slots):
    spatial = spec.get("spatial")
    if spatial is None:
        raise ConfigError("missing spatial spectral map", "kernel.spatial")
    if isinstance(spatial, list):
        if len(spatial) != n_slots:
            raise ConfigError(f"expected {n_slots} maps, got {len(spatial)}", "kernel.spatial")
        return [spectral_map(m, f"kernel.spatial[{i}]") for i, m in enumerate(spatial)]
    return spectral_map(spatial)


def bridges(spec, n_vertices, n_slots, load_matrix=None):
    """Bridge matrices from ``{"type": "scaled-identity", "s": ...}`` or
    ``{"type": "matrix", "path": ...}`` (one matrix reused for every slot)."""
    if spec is None:
        spec = {"type": "scaled-identity", "s": 0.0}
    kind = spec.get("type")
    if kind == "scaled-identity":
        s = spec.get("s")
        if not isinstance(s, (int, float)) or s < 0:
            raise ConfigError("s must be a non-negative number", "kernel.bridges.s")
        return scaled_identity_bridges(n_vertices, n_slots, float(s))
    if kind == "matrix":
        if "path" not in spec or load_matrix is None:
            raise ConfigError("matrix bridges need a 'path'", "kernel.bridges.path")
        B = np.asarray(load_matrix(spec["path"]), dtype=float)
        if B.shape != (n_vertices, n_vertices) or np.any(B < 0):
            raise ConfigError(f"bridge matrix must be non-negative ({n_vertices}, "
                              f"{n_vertices})", "kernel.bridges.path")
        return [B] * (n_slots - 1)
    raise ConfigError(f"unknown bridge type {kind!r}", "kernel.bridges.type")


def _kernel_type(spec):
    if not isinstance(spec, dict):
        raise ConfigError("expected an object", "kernel")
    kind = spec.get("type", "timevarying")
    if kind not in KERNEL_TYPES:
        raise ConfigError(f"unknown kernel type {kind!r}; expected one of "
                          f"{list(KERNEL_TYPES)}", "kernel.type")
    return kind


def _temporal_laplacian(spec, n_slots):
    if "time_adjacency" in spec:
        return laplacian(np.asarray(spec["time_adjacency"], dtype=float))
    return laplacian(path_adjacency(n_slots))


def _static_adjacency(graph):
    tv = as_time_varying(graph, 1) if not hasattr(graph, "slots") else graph
    if not tv.is_time_invariant():
        raise ConfigError("Kronecker kernels need a time-invariant graph", "kernel.type")
    return tv.slots[0]


def build_kernel(spec, graph, n_slots, load_matrix=None):
    """Dense :class:`SpaceTimeKernel` for ``spec`` over ``n_slots`` slots."""
    kind = _kernel_type(spec)
    graph = as_time_varying(graph, n_slots)
    N = graph.n_vertices
    try:
        if kind == "timevarying":
            B = bridges(spec.get("bridges"), N, n_slots, load_matrix)
            kernel = timevarying_kernel_inverse(graph, _spatial_maps(spec, n_slots), B)
        else:
            W = _static_adjacency(graph)
            r_space = spectral_map(spec.get("spatial"), "kernel.spatial")
            r_time = spectral_map(spec.get("temporal"), "kernel.temporal")
            L_T = _temporal_laplacian(spec, n_slots)
            if kind == "kronecker-product":
                kernel = kronecker_product_kernel(laplacian_kernel(L_T, r_time),
                                                  laplacian_kernel(laplacian(W), r_space))
            else:
                kernel = kronecker_sum_kernel_inverse(
                    laplacian_kernel_inverse(L_T, r_time),
                    laplacian_kernel_inverse(laplacian(W), r_space))
    except KernelError as exc:
        raise ConfigError(str(exc), "kernel") from None
    kernel.description.update(spec)
    return kernel


def build_schedule(spec, graph, n_slots, load_matrix=None):
    """Kalman schedule for ``spec``.

    Time-varying kernels go straight from blocks, so no dense ``NT x NT``
    matrix is formed; other kernels are built densely and must have a
    block-tridiagonal inverse.
    """
    kind = _kernel_type(spec)
    graph = as_time_varying(graph, n_slots)
    if kind == "timevarying":
        B = bridges(spec.get("bridges"), graph.n_vertices, n_slots, load_matrix)
        try:
            blocks = timevarying_kernel_blocks(graph, _spatial_maps(spec, n_slots), B)
        except KernelError as exc:
            raise ConfigError(str(exc), "kernel") from None
        return schedule_from_blocks(*blocks)
    kernel = build_kernel(spec, graph, n_slots, load_matrix)
    try:
        return schedule_from_inverse_kernel(kernel)
    except ValueError as exc:
        raise ConfigError(str(exc), "kernel") from None


def build_steady_state_schedule(spec, graph, load_matrix=None):
    """Experimental infinite-horizon schedule (time-invariant kernels only)."""
    if _kernel_type(spec) != "timevarying":
        raise ConfigError("steady-state streaming supports time-varying kernels only",
                          "kernel.type")
    W = _static_adjacency(graph)
    # three slots give the first, an interior and the sub-diagonal block
    diag_blocks, sub_blocks = timevarying_kernel_blocks(
        W, spectral_map(spec.get("spatial")),
        bridges(spec.get("bridges"), W.shape[0], 3, load_matrix), n_slots=3)
    return steady_state_schedule(diag_blocks[0], diag_blocks[1], sub_blocks[0])


def spatial_kernels(spec, graph, n_slots):
    """Per-slot ``(T, N, N)`` spatial kernels used by the instantaneous
    estimator: the spatial Laplacian kernel of each slot."""
    kind = _kernel_type(spec)
    graph = as_time_varying(graph, n_slots)
    maps = _spatial_maps(spec, n_slots) if kind == "timevarying" else spectral_map(spec.get("spatial"))
    if isinstance(maps, SpectralMap):
        maps = [maps] * n_slots
    cache = {}
    out = np.empty((n_slots, graph.n_vertices, graph.n_vertices))
    for t in range(n_slots):
        key = (id(graph.slots[t]), maps[t])
        if key not in cache:
            try:
                cache[key] = laplacian_kernel(laplacian(graph.slots[t]), maps[t])
            except KernelError as exc:
                raise ConfigError(str(exc), "kernel.spatial") from None
        out[t] = cache[key]
    return out
