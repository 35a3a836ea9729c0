"""Closed-form kernel ridge regression estimators for space-time signals.

All estimators minimise

    sum_t (1 / M[t]) ||y[t] - S[t] f[t]||^2 + mu * f.T K^{-1} f

over the observed slots, solved as ``K S.T (S K S.T + mu D)^{-1} y``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

#: Solves warn above this (1-norm) condition number estimate.
CONDITION_LIMIT = 1e12


class NumericalError(RuntimeError):
    """A factorization failed; ``stage`` names the step."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class Estimate:
    """Reconstructed signal.

    Attributes
    ----------
    values : ndarray of shape (N, T)
        Column ``t`` is the estimate of ``f[t]``; what it conditions on
        depends on the estimator (all data, data up to ``t``, ...).
    estimator : str
    mu : float
    kernel : dict
        Description of the kernel used.
    predicted : ndarray of shape (N, T) or None
        One-step predictions ``f[t | t-1]`` (Kalman filter only).
    error_matrices : ndarray of shape (T, N, N) or None
        Posterior error matrices ``M[t | t]`` (Kalman filter only).
    info : dict
    """

    values: np.ndarray
    estimator: str
    mu: float = None
    kernel: dict = field(default_factory=dict)
    predicted: np.ndarray = None
    error_matrices: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("estimate has non-finite entries", stage=self.estimator)

    def slot(self, t):
        return self.values[:, t]


def solve_spd(A, b, stage="solve"):
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky.

    Warns with :class:`IllConditionedWarning` when the estimated condition
    number exceeds ``CONDITION_LIMIT``.
    """
    try:
        c, lower = linalg.cho_factor(A, lower=False, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"{stage}: matrix is not positive definite ({exc})",
                             stage=stage) from None
    anorm = np.max(np.sum(np.abs(A), axis=0))
    rcond, info = lapack.dpocon(c, anorm)
    if info == 0 and rcond * CONDITION_LIMIT < 1.0:
        warnings.warn(f"{stage}: condition number estimate {1.0 / max(rcond, 1e-300):.3g} "
                      f"exceeds {CONDITION_LIMIT:.0e}", IllConditionedWarning, stacklevel=3)
    return linalg.cho_solve((c, lower), b, check_finite=False)


def instantaneous_estimate(y, indices, K, mu):
    """Per-slot KRR estimate ``K S.T (S K S.T + mu M I)^{-1} y``.

    Parameters
    ----------
    y : array of shape (M,)
    indices : array of shape (M,)
        Sampled vertices.
    K : ndarray of shape (N, N)
        Spatial kernel (not its inverse).
    mu : float

    Returns
    -------
    ndarray of shape (N,)
        Zero when nothing is sampled.
    """
    K = np.asarray(K, dtype=float)
    idx = np.asarray(indices, dtype=np.int64)
    y = np.asarray(y, dtype=float)
    if mu <= 0:
        raise ValueError("mu must be positive")
    if idx.size == 0:
        return np.zeros(K.shape[0])
    A = K[np.ix_(idx, idx)] + mu * idx.size * np.eye(idx.size)
    return K[:, idx] @ solve_spd(A, y, stage="instantaneous")


def instantaneous_estimates(obs, plan, kernels, mu):
    """Apply :func:`instantaneous_estimate` slot by slot.

    ``kernels`` is one (N, N) kernel or a sequence with one per slot.
    """
    obs.check_plan(plan)
    kernels = np.asarray(kernels, dtype=float)
    if kernels.ndim == 2:
        kernels = np.broadcast_to(kernels, (plan.n_slots,) + kernels.shape)
    F = np.column_stack([instantaneous_estimate(obs[t], plan[t], kernels[t], mu)
                         for t in range(plan.n_slots)])
    return Estimate(F, "instantaneous", mu)


def _row_weights(obs, plan, mu, upto):
    v = obs.noise_weights(plan, mu)
    return np.repeat(v[:upto], plan.counts[:upto])


def _closed_form(K, rows, y, weights, stage):
    if rows.size == 0:
        return np.zeros(K.shape[0])
    A = K[np.ix_(rows, rows)]
    A[np.diag_indices_from(A)] += weights
    return K[:, rows] @ solve_spd(A, y, stage=stage)


def batch_estimate(obs, plan, kernel, mu):
    """Batch KRR over all slots.

    Parameters
    ----------
    obs : ObservationSet
    plan : SamplingPlan
    kernel : SpaceTimeKernel
    mu : float

    Returns
    -------
    Estimate
        ``values[:, t]`` estimates ``f[t]`` given every observation.
    """
    return _online(obs, plan, kernel, mu, plan.n_slots - 1, "batch")


def online_closedform_estimate(obs, plan, kernel, mu, t):
    """Growing-window KRR estimate given the observations of slots ``0..t``.

    The kernel spans the full horizon, so the result holds estimates of
    past, present and future slots: ``values[:, tau]`` is ``f[tau | t]``.
    Cost grows cubically with the number of samples seen.
    """
    return _online(obs, plan, kernel, mu, t, "online-closedform")


def _online(obs, plan, kernel, mu, t, name):
    if mu <= 0:
        raise ValueError("mu must be positive")
    if plan.n_vertices != kernel.n_vertices:
        raise ValueError(f"plan has {plan.n_vertices} vertices, kernel "
                         f"{kernel.n_vertices}")
    if not 0 <= t < kernel.n_slots:
        raise ValueError(f"slot {t} outside horizon of {kernel.n_slots} slots")
    if plan.n_slots < t + 1 or obs.n_slots < t + 1:
        raise ValueError(f"need observations up to slot {t}")
    rows = plan.stacked_indices(t + 1)
    y = obs.stacked(t + 1)
    if y.size != rows.size:
        obs.check_plan(plan)
    weights = _row_weights(obs, plan, mu, t + 1)
    f = _closed_form(kernel.kernel_matrix, rows, y, weights, stage=name)
    F = f.reshape(kernel.n_slots, kernel.n_vertices).T
    return Estimate(F, name, mu, dict(kernel.description), info={"t": t})


def online_closedform_filtered(obs, plan, kernel, mu):
    """Sequence of present estimates ``f[t | t]`` from the growing-window
    closed form, one full solve per slot."""
    T = plan.n_slots
    cols = [online_closedform_estimate(obs, plan, kernel, mu, t).values[:, t]
            for t in range(T)]
    return Estimate(np.column_stack(cols), "online-closedform", mu,
                    dict(kernel.description))


def krr_objective(F, obs, plan, kernel_inverse, mu):
    """Batch KRR objective at the ``(N, T)`` signal ``F``.

    Uses the noise weights of ``obs`` scaled by ``1 / mu`` when they are
    given, so that the default reduces to the ``1 / M[t]`` weighting.
    """
    F = np.asarray(F, dtype=float)
    v = obs.noise_weights(plan, mu) / mu
    fit = 0.0
    for t in range(plan.n_slots):
        if plan.counts[t]:
            r = obs[t] - F[plan[t], t]
            fit += r @ r / v[t]
    f = F.T.reshape(-1)
    return fit + mu * f @ kernel_inverse @ f
