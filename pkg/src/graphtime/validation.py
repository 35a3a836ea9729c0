"""Input checks shared by the estimator classes."""

import numpy as np
from sklearn.utils.validation import check_array

from .graph import TimeVaryingGraph, as_time_varying


def check_signal_matrix(X, n_vertices=None, n_slots=None):
    """Validate an ``(n_slots, n_vertices)`` array with NaN for missing entries.

    Infinite values are rejected; NaN marks an unobserved vertex.
    """
    X = check_array(X, dtype=float, ensure_all_finite="allow-nan")
    if n_vertices is not None and X.shape[1] != n_vertices:
        raise ValueError(f"X has {X.shape[1]} columns, the graph has {n_vertices} vertices")
    if n_slots is not None and X.shape[0] != n_slots:
        raise ValueError(f"X has {X.shape[0]} rows but the estimator was fitted on "
                         f"{n_slots} slots")
    return X


def check_graph(graph, n_slots):
    """Coerce an adjacency array, Graph or TimeVaryingGraph to ``n_slots`` slots."""
    if isinstance(graph, TimeVaryingGraph) and graph.n_slots == 1 and n_slots > 1:
        graph = TimeVaryingGraph.constant(graph.slots[0], n_slots)
    return as_time_varying(graph, n_slots)


def check_mu(mu):
    if isinstance(mu, bool) or not isinstance(mu, (int, float, np.floating)) or not mu > 0:
        raise ValueError(f"mu must be a positive number, got {mu!r}")
    return float(mu)
