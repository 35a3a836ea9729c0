"""Reading and writing graphs, signals and observation records."""

import glob
import hashlib
import json
import os

import numpy as np

from .graph import TimeVaryingGraph, check_adjacency
from .observations import ObservationSet, SamplingPlan

FLOAT_FORMAT = "%.17g"


def read_matrix_csv(path):
    """Headerless CSV of reals; empty fields and ``nan`` read as NaN."""
    A = np.genfromtxt(path, delimiter=",", dtype=float, missing_values="",
                      filling_values=np.nan, ndmin=2)
    return A


def write_matrix_csv(path, A):
    """Write with 17 significant digits so doubles round-trip exactly."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in A:
            fh.write(",".join(FLOAT_FORMAT % v for v in row) + "\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def graph_files(spec, base_dir="."):
    """Files a graph spec refers to, resolved against ``base_dir``.

    ``spec`` is a CSV path, ``{"csv": path}``, ``{"json": path}`` or
    ``{"slots": glob}`` matching one CSV per slot (e.g. ``adj_*.csv``,
    sorted by name).
    """
    if isinstance(spec, str):
        spec = {"json": spec} if spec.endswith(".json") else {"csv": spec}
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError("graph must be a path or one of {csv, json, slots}")
    (kind, value), = spec.items()
    path = os.path.join(base_dir, value)
    if kind in ("csv", "json"):
        if not os.path.exists(path):
            raise FileNotFoundError(f"graph file {path} not found")
        return kind, [path]
    if kind == "slots":
        files = sorted(glob.glob(path))
        if not files:
            raise FileNotFoundError(f"no graph slot files match {path}")
        return kind, files
    raise ValueError(f"unknown graph source {kind!r}")


def load_graph(spec, base_dir="."):
    """Load a static graph (one slot) or a time-varying graph.

    Always returns a :class:`TimeVaryingGraph`; static graphs have one slot.
    """
    kind, files = graph_files(spec, base_dir)
    if kind == "json":
        with open(files[0]) as fh:
            doc = json.load(fh)
        n = doc.get("n")
        slots = doc.get("slots")
        if not isinstance(slots, list) or not slots:
            raise ValueError(f"{files[0]}: 'slots' must be a non-empty list")
        # a bare N x N matrix is a single slot
        if np.ndim(slots) == 2:
            slots = [slots]
        g = TimeVaryingGraph([check_adjacency(W, f"slot {t} of {files[0]}")
                              for t, W in enumerate(slots)])
        if n is not None and g.n_vertices != n:
            raise ValueError(f"{files[0]}: n = {n} but slots are {g.n_vertices} x "
                             f"{g.n_vertices}")
        return g
    return TimeVaryingGraph([check_adjacency(read_matrix_csv(f), os.path.basename(f))
                             for f in files])


def save_graph_json(path, graph):
    slots = [W.tolist() for W in graph.slots]
    with open(path, "w") as fh:
        json.dump({"n": graph.n_vertices, "slots": slots}, fh)


def parse_record(line):
    """Parse one ``{"t": ..., "indices": [...], "values": [...]}`` record.

    Returns ``(t, indices, values)`` with indices sorted. Raises ValueError
    on malformed input.
    """
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed record: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise ValueError("malformed record: expected an object")
    t = rec.get("t")
    if not isinstance(t, int) or isinstance(t, bool) or t < 0:
        raise ValueError("malformed record: 't' must be a non-negative integer")
    idx = rec.get("indices", [])
    vals = rec.get("values", [])
    try:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        vals = np.asarray(vals, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ValueError("malformed record: indices/values must be numeric lists") from None
    if idx.size != vals.size:
        raise ValueError("malformed record: indices and values differ in length")
    if not np.all(np.isfinite(vals)):
        raise ValueError("malformed record: values must be finite")
    order = np.argsort(idx, kind="stable")
    idx, vals = idx[order], vals[order]
    if idx.size and np.any(np.diff(idx) == 0):
        raise ValueError("malformed record: duplicate vertex index")
    return t, idx, vals


def load_observations(path, n_vertices=None, n_slots=None):
    """Observations from an ``(N, T)`` CSV with empty/NaN for unobserved
    entries, or from newline-delimited JSON records.

    Returns ``(ObservationSet, SamplingPlan)``.
    """
    if path.endswith((".jsonl", ".ndjson")):
        if n_vertices is None:
            raise ValueError("n_vertices is required for record files")
        slots = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    t, idx, vals = parse_record(line)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
                if t in slots:
                    raise ValueError(f"{path}:{lineno}: slot {t} appears twice")
                slots[t] = (idx, vals)
        T = n_slots if n_slots is not None else (max(slots) + 1 if slots else 0)
        if slots and max(slots) >= T:
            raise ValueError(f"{path}: slot {max(slots)} is beyond the horizon of {T} slots")
        empty = (np.zeros(0, dtype=np.int64), np.zeros(0))
        pairs = [slots.get(t, empty) for t in range(T)]
        plan = SamplingPlan(n_vertices, tuple(p[0] for p in pairs))
        return ObservationSet(tuple(p[1] for p in pairs)), plan
    Y = read_matrix_csv(path)
    if n_slots is not None and Y.shape[1] != n_slots:
        raise ValueError(f"{path}: {Y.shape[1]} columns but the horizon is {n_slots} slots")
    if np.any(np.isinf(Y)):
        raise ValueError(f"{path}: infinite observation")
    if n_vertices is not None and Y.shape[0] != n_vertices:
        raise ValueError(f"{path}: {Y.shape[0]} rows but the graph has {n_vertices} vertices")
    return ObservationSet.from_matrix(Y)
