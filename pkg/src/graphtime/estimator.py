"""Scikit-learn style wrappers around the reconstruction routines.

The estimators behave like imputers: ``X`` has one row per time slot and
one column per vertex, with NaN at unobserved vertices, and ``transform``
returns the same shape with every entry filled in. The space-time kernel
depends on the horizon, so ``fit`` fixes the number of slots.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import build_kernel, build_schedule, spatial_kernels
from .estimators import batch_estimate, instantaneous_estimates, online_closedform_filtered
from .kkf import run_kkf
from .observations import ObservationSet
from .validation import check_graph, check_mu, check_signal_matrix

DEFAULT_KERNEL = {"type": "timevarying",
                  "spatial": {"family": "diffusion", "sigma2": 1.0},
                  "bridges": {"type": "scaled-identity", "s": 1.0}}


class _SpaceTimeImputer(TransformerMixin, BaseEstimator):
    """Shared plumbing; subclasses implement ``_reconstruct``."""

    def __init__(self, graph=None, kernel=None, mu=1e-3):
        self.graph = graph
        self.kernel = kernel
        self.mu = mu

    def _kernel_spec(self):
        return DEFAULT_KERNEL if self.kernel is None else self.kernel

    def fit(self, X, y=None):
        """Build the kernel (or filter schedule) for ``X.shape[0]`` slots.

        Parameters
        ----------
        X : array-like of shape (n_slots, n_vertices)
            Only its shape is used.
        y : ignored
        """
        if self.graph is None:
            raise ValueError("graph is required")
        check_mu(self.mu)
        X = check_signal_matrix(X)
        self.n_slots_ = X.shape[0]
        self.graph_ = check_graph(self.graph, self.n_slots_)
        self.n_features_in_ = self.graph_.n_vertices
        check_signal_matrix(X, self.n_features_in_)
        self._prepare()
        return self

    def _prepare(self):
        self.kernel_ = build_kernel(self._kernel_spec(), self.graph_, self.n_slots_)

    def transform(self, X):
        """Estimates at every vertex and slot, shape (n_slots, n_vertices)."""
        check_is_fitted(self, "n_slots_")
        X = check_signal_matrix(X, self.n_features_in_, self.n_slots_)
        obs, plan = ObservationSet.from_matrix(X.T)
        self.estimate_ = self._reconstruct(obs, plan)
        return self.estimate_.values.T.copy()

    def _reconstruct(self, obs, plan):
        raise NotImplementedError


class InstantaneousKRR(_SpaceTimeImputer):
    """Slot-by-slot kernel ridge regression with the spatial kernel only.

    Parameters
    ----------
    graph : array-like, Graph or TimeVaryingGraph
    kernel : dict, optional
        Kernel spec; only its ``spatial`` map is used.
    mu : float
        Regularization weight.
    """

    def _prepare(self):
        self.spatial_kernels_ = spatial_kernels(self._kernel_spec(), self.graph_, self.n_slots_)

    def _reconstruct(self, obs, plan):
        return instantaneous_estimates(obs, plan, self.spatial_kernels_, check_mu(self.mu))


class BatchKRR(_SpaceTimeImputer):
    """Kernel ridge regression over the whole space-time graph at once.

    Each slot's estimate uses the observations of every slot, past and
    future.
    """

    def _reconstruct(self, obs, plan):
        return batch_estimate(obs, plan, self.kernel_, check_mu(self.mu))


class OnlineKRR(_SpaceTimeImputer):
    """Online estimates ``f[t | t]`` from the closed form over a growing window.

    Cost grows with ``t``; :class:`KernelKalmanFilter` gives the same
    estimates at constant cost per slot.
    """

    def _reconstruct(self, obs, plan):
        return online_closedform_filtered(obs, plan, self.kernel_, check_mu(self.mu))


class KernelKalmanFilter(_SpaceTimeImputer):
    """Online estimates ``f[t | t]`` from the kernel Kalman filter.

    Parameters
    ----------
    graph : array-like, Graph or TimeVaryingGraph
    kernel : dict, optional
        Kernel spec. Time-varying kernels build the filter schedule directly
        from kernel blocks; Kronecker kernels whose inverse has a wider band
        are lifted to super-slots.
    mu : float
    noise : float or sequence of floats, optional
        Observation-noise weights per slot. The default ``mu * M[t]``
        reproduces the kernel ridge regression estimates exactly.

    Attributes
    ----------
    schedule_ : KkfSchedule or None
    estimate_ : Estimate
        Result of the last ``transform``, including ``error_matrices``.
    """

    def __init__(self, graph=None, kernel=None, mu=1e-3, noise=None):
        super().__init__(graph=graph, kernel=kernel, mu=mu)
        self.noise = noise

    def _prepare(self):
        spec = self._kernel_spec()
        if spec.get("type", "timevarying") == "timevarying":
            self.schedule_ = build_schedule(spec, self.graph_, self.n_slots_)
            self.kernel_ = None
        else:
            self.schedule_ = None
            self.kernel_ = build_kernel(spec, self.graph_, self.n_slots_)

    def _reconstruct(self, obs, plan):
        noise = None
        if self.noise is not None:
            noise = tuple(np.broadcast_to(np.asarray(self.noise, dtype=float), (plan.n_slots,)))
        return run_kkf(self.kernel_, obs, plan, check_mu(self.mu), noise=noise,
                       schedule=self.schedule_)
