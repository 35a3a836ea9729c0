"""Kernel Kalman filter: exact online KRR for block-tridiagonal inverse kernels.

When the inverse kernel is block tridiagonal with diagonal blocks ``D[t]``
and sub-diagonal blocks ``E[t]`` (at block (t, t-1)), the regularizer
``f.T K^{-1} f`` splits into a state-space form with transition matrices
``P[t]`` and plant-noise kernels ``Q[t]``. A Kalman filter on that form
returns the growing-window KRR estimates ``f[t | t]`` exactly, at a cost
per slot that does not grow with ``t``.

Slots are 0-based throughout; ``P[0]`` is zero by convention.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .estimators import Estimate, NumericalError
from .kernels import SpaceTimeKernel, block_bandwidth
from .observations import ObservationSet, SamplingPlan


class ScheduleError(NumericalError):
    """The backward recursion met a non positive definite block.

    ``slot`` is the (0-based) slot whose ``Q^{-1}`` failed.
    """

    def __init__(self, message, slot):
        super().__init__(message, stage="schedule")
        self.slot = slot


def _sym(A):
    return (A + A.T) / 2.0


def _spd_inverse(A, slot):
    try:
        c = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError:
        raise ScheduleError(
            f"Q^-1 at slot {slot} is not positive definite; the inverse kernel "
            "is not positive definite or not block tridiagonal", slot) from None
    return _sym(linalg.cho_solve(c, np.eye(A.shape[0])))


@dataclass(frozen=True, eq=False)
class KkfSchedule:
    """Transition matrices and plant-noise kernels of the filter.

    Attributes
    ----------
    plant_noise : ndarray of shape (T, N, N)
        ``Q[t]``, symmetric positive definite.
    plant_noise_inverse : ndarray of shape (T, N, N)
        ``Q[t]^{-1}``.
    transitions : ndarray of shape (T, N, N)
        ``P[t]``; ``P[0]`` is zero.
    steady_state : bool
        True for the experimental infinite-horizon schedule, where slot
        ``t >= 1`` reuses the last entry.
    """

    plant_noise: np.ndarray
    plant_noise_inverse: np.ndarray
    transitions: np.ndarray
    steady_state: bool = False

    @property
    def n_vertices(self):
        return self.plant_noise.shape[1]

    @property
    def n_slots(self):
        return None if self.steady_state else self.plant_noise.shape[0]

    def slot(self, t):
        """``(Q[t], P[t])`` for slot ``t``."""
        if self.steady_state:
            k = min(t, 1)
            return self.plant_noise[k], self.transitions[k]
        return self.plant_noise[t], self.transitions[t]

    def regularizer(self, F):
        """``f[0].T Q[0]^{-1} f[0] + sum_t ||f[t] - P[t] f[t-1]||^2_{Q[t]}``.

        Equals ``f.T K^{-1} f`` for the inverse kernel the schedule came from.
        """
        F = np.asarray(F, dtype=float)
        total = F[:, 0] @ self.plant_noise_inverse[0] @ F[:, 0]
        for t in range(1, F.shape[1]):
            r = F[:, t] - self.transitions[t] @ F[:, t - 1]
            total += r @ self.plant_noise_inverse[t] @ r
        return total


def schedule_from_blocks(diag_blocks, sub_blocks):
    """Backward recursion from the blocks of a block-tridiagonal inverse kernel.

    ``Q^{-1}[T-1] = D[T-1]``; then for ``t = T-1, ..., 1``:
    ``P[t] = -Q[t] E[t]`` and ``Q^{-1}[t-1] = D[t-1] - P[t].T Q^{-1}[t] P[t]``.

    Parameters
    ----------
    diag_blocks : sequence of T (N, N) arrays
    sub_blocks : sequence of T - 1 (N, N) arrays
        ``sub_blocks[t-1]`` is the block at (t, t-1).

    Raises
    ------
    ScheduleError
        If some ``Q^{-1}[t]`` is not positive definite.
    """
    T = len(diag_blocks)
    if len(sub_blocks) != T - 1:
        raise ValueError(f"expected {T - 1} sub-diagonal blocks, got {len(sub_blocks)}")
    N = np.shape(diag_blocks[0])[0]
    Q = np.empty((T, N, N))
    Q_inv = np.empty((T, N, N))
    P = np.zeros((T, N, N))
    Q_inv[T - 1] = _sym(np.asarray(diag_blocks[T - 1], dtype=float))
    for t in range(T - 1, 0, -1):
        Q[t] = _spd_inverse(Q_inv[t], t)
        E = np.asarray(sub_blocks[t - 1], dtype=float)
        P[t] = -Q[t] @ E
        # P.T Q^-1 P = E.T Q E, which stays symmetric in floating point
        Q_inv[t - 1] = _sym(np.asarray(diag_blocks[t - 1], dtype=float) - E.T @ Q[t] @ E)
    Q[0] = _spd_inverse(Q_inv[0], 0)
    for A in (Q, Q_inv, P):
        A.setflags(write=False)
    return KkfSchedule(Q, Q_inv, P)


def schedule_from_inverse_kernel(kernel):
    """Filter schedule for a block-tridiagonal space-time kernel.

    Raises
    ------
    ValueError
        If the inverse kernel has block bandwidth above one; see
        :func:`lift_block_bandwidth`.
    """
    if kernel.matrix_form == "inverse":
        bw = block_bandwidth(kernel.data, kernel.n_vertices)
    else:
        bw = kernel.block_bandwidth
    if bw > 1:
        raise ValueError(f"inverse kernel has block bandwidth {bw}; lift it to "
                         "bandwidth 1 first")
    return schedule_from_blocks(*kernel.inverse_blocks())


def steady_state_schedule(first_block, interior_block, sub_block, tol=1e-13,
                          max_iter=100000):
    """Infinite-horizon schedule for a time-invariant inverse kernel.

    Experimental. Iterates ``X <- D - E.T X^{-1} E`` to its fixed point,
    which is the limit of ``Q^{-1}[t]`` far from the horizon, and returns a
    schedule whose slot 0 uses ``first_block`` and every later slot the
    fixed point. Estimates approach the finite-horizon ones as the horizon
    grows.
    """
    D = _sym(np.asarray(interior_block, dtype=float))
    E = np.asarray(sub_block, dtype=float)
    X = D
    for _ in range(max_iter):
        Q_t = _spd_inverse(X, 1)
        X_new = _sym(D - E.T @ Q_t @ E)
        if np.max(np.abs(X_new - X)) <= tol * max(np.max(np.abs(X)), 1.0):
            X = X_new
            break
        X = X_new
    else:
        raise NumericalError("steady-state recursion did not converge", stage="schedule")
    Q_t = _spd_inverse(X, 1)
    P_t = -Q_t @ E
    X0 = _sym(np.asarray(first_block, dtype=float) - E.T @ Q_t @ E)
    Q0 = _spd_inverse(X0, 0)
    N = D.shape[0]
    return KkfSchedule(np.stack([Q0, Q_t]), np.stack([X0, X]),
                       np.stack([np.zeros((N, N)), P_t]), steady_state=True)


@dataclass(frozen=True, eq=False)
class KkfState:
    """Filter state after processing slot ``t``.

    ``t = -1`` with zero estimate and error matrix is the initial state.
    """

    t: int
    f_filtered: np.ndarray
    f_predicted: np.ndarray
    M_filtered: np.ndarray
    M_predicted: np.ndarray
    gain: np.ndarray = field(default=None)

    @classmethod
    def initial(cls, n_vertices):
        z = np.zeros(n_vertices)
        Z = np.zeros((n_vertices, n_vertices))
        return cls(-1, z, z, Z, Z, np.zeros((n_vertices, 0)))


def kkf_step(state, plant_noise, transition, y, indices, noise):
    """One predict/correct step of the kernel Kalman filter.

    Parameters
    ----------
    state : KkfState
        Posterior of the previous slot.
    plant_noise, transition : ndarray of shape (N, N)
        ``Q[t]`` and ``P[t]``.
    y : array of shape (M,)
    indices : array of shape (M,)
        Sampled vertices; empty means prediction only.
    noise : float or array of shape (M,)
        Observation-noise weight(s); an array gives a diagonal noise matrix.

    Returns
    -------
    KkfState
    """
    idx = np.asarray(indices, dtype=np.int64)
    f_pred = transition @ state.f_filtered
    M_pred = _sym(transition @ state.M_filtered @ transition.T + plant_noise)
    if idx.size == 0:
        return KkfState(state.t + 1, f_pred, f_pred, M_pred, M_pred,
                        np.zeros((f_pred.size, 0)))
    MS = M_pred[:, idx]
    innovation = MS[idx, :].copy()
    innovation[np.diag_indices_from(innovation)] += noise
    try:
        c = linalg.cho_factor(innovation, lower=True)
    except linalg.LinAlgError:
        raise NumericalError(f"innovation matrix at slot {state.t + 1} is singular",
                             stage="kkf-step") from None
    G = linalg.cho_solve(c, MS.T).T
    f = f_pred + G @ (np.asarray(y, dtype=float) - f_pred[idx])
    M = _sym(M_pred - G @ MS.T)
    return KkfState(state.t + 1, f, f_pred, M, M_pred, G)


def filter_observations(schedule, obs, plan, noise, state=None):
    """Run :func:`kkf_step` over every slot of ``plan``.

    ``noise`` holds one weight (or one array of weights) per slot.
    Returns ``(filtered, predicted, error_matrices, final_state)``.
    """
    N = plan.n_vertices
    state = KkfState.initial(N) if state is None else state
    T = plan.n_slots
    filtered = np.empty((N, T))
    predicted = np.empty((N, T))
    errors = np.empty((T, N, N))
    for t in range(T):
        Q_t, P_t = schedule.slot(state.t + 1)
        state = kkf_step(state, Q_t, P_t, obs[t], plan[t], noise[t])
        filtered[:, t] = state.f_filtered
        predicted[:, t] = state.f_predicted
        errors[t] = state.M_filtered
    return filtered, predicted, errors, state


@dataclass(frozen=True, eq=False)
class LiftedProblem:
    """A bandwidth-``b`` problem restated on super-slots of ``b`` slots.

    ``noise`` holds per-observation weights for each super-slot.
    """

    kernel: SpaceTimeKernel
    obs: ObservationSet
    plan: SamplingPlan
    noise: tuple
    bandwidth: int
    n_slots: int
    n_vertices: int

    def unstack(self, F_lifted):
        """``(bN, T')`` super-slot values back to ``(N, T)``, padding dropped."""
        F_lifted = np.asarray(F_lifted)
        N = self.n_vertices
        F = F_lifted.T.reshape(-1, N).T
        return F[:, :self.n_slots]


def lift_block_bandwidth(kernel, obs, plan, mu, bandwidth=None):
    """Stack ``b`` consecutive slots so a bandwidth-``b`` inverse kernel
    becomes block tridiagonal.

    When ``T`` is not a multiple of ``b``, trailing slots without samples
    are appended; the padded part of the inverse kernel is an identity
    block decoupled from the rest, so the original estimates are unchanged.

    Parameters
    ----------
    kernel : SpaceTimeKernel
    obs : ObservationSet
    plan : SamplingPlan
    mu : float
        Used for the default noise weights ``mu * M[t]``.
    bandwidth : int, optional
        Defaults to the kernel's measured block bandwidth.
    """
    N, T = kernel.n_vertices, kernel.n_slots
    b = block_bandwidth(kernel.inverse_matrix, N) if bandwidth is None else int(bandwidth)
    b = max(b, 1)
    if b > T:
        raise ValueError(f"bandwidth {b} exceeds the horizon of {T} slots")
    obs.check_plan(plan)
    v = obs.noise_weights(plan, mu)
    T_pad = -(-T // b) * b
    K_inv = np.array(kernel.inverse_matrix)
    if T_pad > T:
        pad = (T_pad - T) * N
        K_inv = linalg.block_diag(K_inv, np.eye(pad))
        plan = plan.padded(T_pad)
        obs = obs.padded(T_pad)
        v = np.concatenate([v, np.ones(T_pad - T)])
    n_super = T_pad // b
    values, indices, noise = [], [], []
    for tau in range(n_super):
        slots = range(tau * b, (tau + 1) * b)
        indices.append(np.concatenate([k * N + plan[t] for k, t in enumerate(slots)]))
        values.append(np.concatenate([obs[t] for t in slots]))
        noise.append(np.concatenate([np.full(plan.counts[t], v[t]) for t in slots]))
    lifted_kernel = SpaceTimeKernel(
        b * N, n_super, K_inv, matrix_form="inverse", tridiagonal_inverse=True,
        block_bandwidth=1, description={**kernel.description, "lifted": b})
    return LiftedProblem(lifted_kernel, ObservationSet(tuple(values)),
                         SamplingPlan(b * N, tuple(indices)), tuple(noise), b, T, N)


def run_kkf(kernel, obs, plan, mu, noise=None, schedule=None):
    """Kernel Kalman filter over a whole observation sequence.

    Parameters
    ----------
    kernel : SpaceTimeKernel or None
        Inverse kernel of any block bandwidth; bandwidth above one is
        handled by lifting to super-slots, in which case column ``t`` of the
        result is the estimate of ``f[t]`` given the data up to the end of
        its super-slot.
    obs : ObservationSet
    plan : SamplingPlan
    mu : float
    noise : sequence of T positive floats, optional
        Observation-noise weights; defaults to ``obs.noise`` and then to
        ``mu * M[t]``, which makes the filter match the KRR closed form.
    schedule : KkfSchedule, optional
        Precomputed schedule for ``kernel``; required when ``kernel`` is
        None.

    Returns
    -------
    Estimate
        ``values`` are the filtered estimates ``f[t | t]``,
        ``error_matrices`` the matrices ``M[t | t]``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    obs.check_plan(plan)
    if noise is not None:
        obs = ObservationSet(obs.values, tuple(noise))
    if kernel is None:
        if schedule is None:
            raise ValueError("need a kernel or a schedule")
        if schedule.n_slots is not None and schedule.n_slots != plan.n_slots:
            raise ValueError(f"plan has {plan.n_slots} slots, schedule horizon is "
                             f"{schedule.n_slots}")
        description = {}
    else:
        if plan.n_slots != kernel.n_slots:
            raise ValueError(f"plan has {plan.n_slots} slots, kernel horizon is "
                             f"{kernel.n_slots}")
        description = dict(kernel.description)
        bw = block_bandwidth(kernel.inverse_matrix, kernel.n_vertices)
        if bw > 1:
            lifted = lift_block_bandwidth(kernel, obs, plan, mu, bandwidth=bw)
            sched = schedule_from_inverse_kernel(lifted.kernel)
            F, Fp, M, _ = filter_observations(sched, lifted.obs, lifted.plan, lifted.noise)
            return Estimate(lifted.unstack(F), "kkf", mu, description,
                            predicted=lifted.unstack(Fp), error_matrices=M,
                            info={"lifted_bandwidth": bw})
        if schedule is None:
            schedule = schedule_from_inverse_kernel(kernel)
    v = obs.noise_weights(plan, mu)
    F, Fp, M, _ = filter_observations(schedule, obs, plan, v)
    return Estimate(F, "kkf", mu, description, predicted=Fp, error_matrices=M)
