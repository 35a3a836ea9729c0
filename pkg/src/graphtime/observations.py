"""Sampling plans, observation sets and noisy sampling of graph signals."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Per-slot sets of observed vertices.

    Parameters
    ----------
    n_vertices : int
    indices : sequence of 1-D int arrays
        ``indices[t]`` lists the observed vertices at slot ``t`` (0-based,
        strictly increasing). Empty slots are allowed.
    """

    n_vertices: int
    indices: tuple

    def __post_init__(self):
        checked = []
        for t, idx in enumerate(self.indices):
            idx = np.asarray(idx, dtype=np.int64).reshape(-1)
            if idx.size:
                if idx[0] < 0 or idx[-1] >= self.n_vertices:
                    raise ValueError(f"slot {t}: vertex index out of range "
                                     f"[0, {self.n_vertices})")
                if np.any(np.diff(idx) <= 0):
                    raise ValueError(f"slot {t}: indices must be strictly increasing")
            idx.setflags(write=False)
            checked.append(idx)
        object.__setattr__(self, "indices", tuple(checked))

    @property
    def n_slots(self):
        return len(self.indices)

    @property
    def counts(self):
        return np.array([idx.size for idx in self.indices], dtype=np.int64)

    def __getitem__(self, t):
        return self.indices[t]

    def complement(self, t):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.indices[t]] = False
        return np.flatnonzero(mask)

    def selection_matrix(self, t):
        """The ``M[t] x N`` 0/1 matrix picking the observed vertices."""
        S = np.zeros((self.indices[t].size, self.n_vertices))
        S[np.arange(self.indices[t].size), self.indices[t]] = 1.0
        return S

    def stacked_indices(self, upto=None):
        """Positions of the observed entries of slots ``< upto`` in the
        time-major stacked signal."""
        upto = self.n_slots if upto is None else upto
        parts = [t * self.n_vertices + self.indices[t] for t in range(upto)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def truncated(self, n_slots):
        return SamplingPlan(self.n_vertices, self.indices[:n_slots])

    def padded(self, n_slots):
        """Append empty slots up to ``n_slots``."""
        extra = (np.zeros(0, dtype=np.int64),) * (n_slots - self.n_slots)
        return SamplingPlan(self.n_vertices, self.indices + extra)

    @classmethod
    def fixed(cls, n_vertices, n_slots, indices):
        """Same observed set at every slot."""
        idx = np.sort(np.asarray(indices, dtype=np.int64))
        return cls(n_vertices, (idx,) * n_slots)

    @classmethod
    def from_mask(cls, mask):
        """From a boolean ``(N, T)`` mask of observed entries."""
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.shape[0], tuple(np.flatnonzero(mask[:, t]) for t in range(mask.shape[1])))

    def mask(self):
        m = np.zeros((self.n_vertices, self.n_slots), dtype=bool)
        for t, idx in enumerate(self.indices):
            m[idx, t] = True
        return m


def random_fixed_plan(n_vertices, n_slots, n_samples, rng):
    """One uniformly drawn set of ``n_samples`` vertices, kept for all slots."""
    rng = np.random.default_rng(rng)
    return SamplingPlan.fixed(n_vertices, n_slots,
                              rng.choice(n_vertices, size=n_samples, replace=False))


def random_plan(n_vertices, n_slots, n_samples, rng):
    """An independent uniform draw of ``n_samples`` vertices per slot.

    ``n_samples`` may be a sequence with one count per slot.
    """
    rng = np.random.default_rng(rng)
    counts = np.broadcast_to(np.asarray(n_samples, dtype=np.int64), (n_slots,))
    return SamplingPlan(n_vertices, tuple(
        np.sort(rng.choice(n_vertices, size=int(m), replace=False)) for m in counts))


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Noisy samples ``y[t]`` taken at the vertices of a sampling plan.

    Parameters
    ----------
    values : sequence of 1-D arrays
        ``values[t]`` has one entry per vertex in ``plan[t]``.
    noise : None or sequence of positive floats
        Per-slot observation-noise weights for the Kalman filter. ``None``
        means the default ``mu * M[t]`` that reproduces the KRR objective.
    """

    values: tuple
    noise: tuple = None

    def __post_init__(self):
        vals = []
        for y in self.values:
            y = np.asarray(y, dtype=float).reshape(-1)
            if not np.all(np.isfinite(y)):
                raise ValueError("observations must be finite")
            y.setflags(write=False)
            vals.append(y)
        object.__setattr__(self, "values", tuple(vals))
        if self.noise is not None:
            noise = tuple(float(v) for v in self.noise)
            if len(noise) != len(vals):
                raise ValueError("need one noise weight per slot")
            if any(not v > 0 for v in noise):
                raise ValueError("noise weights must be positive")
            object.__setattr__(self, "noise", noise)

    @property
    def n_slots(self):
        return len(self.values)

    def __getitem__(self, t):
        return self.values[t]

    def check_plan(self, plan):
        if plan.n_slots != self.n_slots:
            raise ValueError(f"plan has {plan.n_slots} slots but observations have "
                             f"{self.n_slots}")
        for t, (y, idx) in enumerate(zip(self.values, plan.indices)):
            if y.size != idx.size:
                raise ValueError(f"slot {t}: {y.size} values for {idx.size} sampled vertices")

    def stacked(self, upto=None):
        upto = self.n_slots if upto is None else upto
        parts = self.values[:upto]
        return np.concatenate(parts) if parts else np.zeros(0)

    def truncated(self, n_slots):
        noise = None if self.noise is None else self.noise[:n_slots]
        return ObservationSet(self.values[:n_slots], noise)

    def padded(self, n_slots):
        extra = n_slots - self.n_slots
        noise = None if self.noise is None else self.noise + (1.0,) * extra
        return ObservationSet(self.values + (np.zeros(0),) * extra, noise)

    def noise_weights(self, plan, mu):
        """Per-slot noise weights, defaulting to ``mu * M[t]``.

        Slots with no samples get weight 1; it is never used.
        """
        if self.noise is not None:
            return np.array(self.noise)
        counts = plan.counts.astype(float)
        return np.where(counts > 0, mu * counts, 1.0)

    def to_matrix(self, plan):
        """``(N, T)`` array with observed values and NaN elsewhere."""
        Y = np.full((plan.n_vertices, plan.n_slots), np.nan)
        for t, (y, idx) in enumerate(zip(self.values, plan.indices)):
            Y[idx, t] = y
        return Y

    @classmethod
    def from_matrix(cls, Y):
        """Split an ``(N, T)`` array with NaN for unobserved entries.

        Returns ``(observations, plan)``.
        """
        Y = np.asarray(Y, dtype=float)
        plan = SamplingPlan.from_mask(~np.isnan(Y))
        return cls(tuple(Y[idx, t] for t, idx in enumerate(plan.indices))), plan


def sample_signal(truth, plan, noise_std=0.0, seed=None):
    """Observe ``truth`` at ``plan`` with i.i.d. Gaussian noise.

    Parameters
    ----------
    truth : ndarray of shape (N, T)
    plan : SamplingPlan
    noise_std : float
    seed : int, Generator or None

    Returns
    -------
    ObservationSet
    """
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (plan.n_vertices, plan.n_slots):
        raise ValueError(f"truth has shape {truth.shape}, plan expects "
                         f"({plan.n_vertices}, {plan.n_slots})")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    values = []
    for t, idx in enumerate(plan.indices):
        y = truth[idx, t].copy()
        if noise_std > 0:
            y += noise_std * rng.standard_normal(idx.size)
        values.append(y)
    return ObservationSet(tuple(values))
