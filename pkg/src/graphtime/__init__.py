"""Reconstruction of time-varying graph signals with space-time kernels.

Batch and online kernel ridge regression over extended graphs, and the
kernel Kalman filter that computes the online estimates with constant
cost per time slot.
"""

__version__ = "0.1.0"

from .estimators import (
    Estimate,
    IllConditionedWarning,
    NumericalError,
    batch_estimate,
    instantaneous_estimate,
    instantaneous_estimates,
    krr_objective,
    online_closedform_estimate,
    online_closedform_filtered,
)
from .evaluation import (
    ExperimentConfig,
    cumulative_nmse,
    generate_smooth_signal,
    grid,
    nmse_series,
    random_knn_graph,
    run_experiment,
    sweep,
)
from .graph import (
    ExtendedGraph,
    Graph,
    GraphValidationError,
    TimeVaryingGraph,
    extend_kronecker_sum,
    extend_tridiagonal,
    extended_laplacian_timevarying,
    laplacian,
    scaled_identity_bridges,
)
from .kernels import (
    KernelError,
    SpaceTimeKernel,
    SpectralMap,
    doubly_selective_kernel_inverse,
    kronecker_product_kernel,
    kronecker_sum_kernel_inverse,
    laplacian_kernel,
    laplacian_kernel_inverse,
    timevarying_kernel_inverse,
)
from .kkf import (
    KkfSchedule,
    KkfState,
    ScheduleError,
    kkf_step,
    run_kkf,
    schedule_from_blocks,
    schedule_from_inverse_kernel,
    steady_state_schedule,
)
from .observations import (
    ObservationSet,
    SamplingPlan,
    random_fixed_plan,
    random_plan,
    sample_signal,
)
from .estimator import BatchKRR, InstantaneousKRR, KernelKalmanFilter, OnlineKRR
