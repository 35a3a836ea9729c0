import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtime.config import ConfigError
from graphtime.evaluation import (
    ExperimentConfig,
    cumulative_nmse,
    generate_smooth_signal,
    grid,
    nmse_series,
    random_knn_graph,
    run_experiment,
    sweep,
)
from graphtime.graph import Graph, check_adjacency
from graphtime.kernels import SpectralMap
from graphtime.observations import ObservationSet, SamplingPlan, random_fixed_plan, random_plan, sample_signal


def test_nmse_hand_example():
    truth = np.array([[1.0, 2.0], [0.0, 1.0], [1.0, 0.0]])
    plan = SamplingPlan.fixed(3, 2, [1])
    assert cumulative_nmse(truth, np.zeros_like(truth), plan, 1) == pytest.approx(1.0)
    assert cumulative_nmse(truth, truth / 2, plan, 1) == pytest.approx(0.25)
    assert cumulative_nmse(truth, truth, plan, 1) == 0.0


def test_nmse_undefined_is_nan():
    truth = np.ones((2, 2))
    plan = SamplingPlan.fixed(2, 2, [0, 1])
    assert np.isnan(cumulative_nmse(truth, np.zeros((2, 2)), plan, 1))
    series = nmse_series(np.zeros((2, 2)), np.ones((2, 2)), SamplingPlan.fixed(2, 2, [0]))
    assert np.all(np.isnan(series))


def test_nmse_shape_mismatch():
    with pytest.raises(ValueError):
        nmse_series(np.ones((2, 2)), np.ones((2, 3)), SamplingPlan.fixed(2, 2, [0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 2**32 - 1),
       st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3))
def test_nmse_properties(N, T, seed, c):
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal((N, T))
    est = rng.standard_normal((N, T))
    plan = random_plan(N, T, int(rng.integers(0, N)), rng)
    zero = nmse_series(truth, np.zeros_like(truth), plan)
    np.testing.assert_allclose(zero, 1.0, rtol=1e-15)
    a = nmse_series(truth, est, plan)
    np.testing.assert_allclose(nmse_series(c * truth, c * est, plan), a, rtol=1e-12)
    assert np.all(a >= 0) and np.all(np.isfinite(a))


def test_sample_signal_full_noiseless(rng):
    truth = rng.standard_normal((4, 3))
    obs = sample_signal(truth, SamplingPlan.fixed(4, 3, range(4)))
    for t in range(3):
        np.testing.assert_array_equal(obs[t], truth[:, t])


def test_sample_signal_selection(rng):
    truth = rng.standard_normal((4, 3))
    obs = sample_signal(truth, SamplingPlan.fixed(4, 3, [2]))
    assert obs[1].tolist() == [truth[2, 1]]


def test_sample_signal_reproducible(rng):
    truth = rng.standard_normal((5, 4))
    plan = random_fixed_plan(5, 4, 3, 0)
    a, b = sample_signal(truth, plan, 0.3, 7), sample_signal(truth, plan, 0.3, 7)
    for t in range(4):
        np.testing.assert_array_equal(a[t], b[t])
    with pytest.raises(ValueError):
        sample_signal(truth, plan, -1.0)


def test_sampling_plan_validation():
    with pytest.raises(ValueError):
        SamplingPlan(3, ([0, 3],))
    with pytest.raises(ValueError):
        SamplingPlan(3, ([1, 1],))
    with pytest.raises(ValueError):
        SamplingPlan(3, ([2, 1],))
    plan = SamplingPlan(3, ([], [0, 2]))
    assert plan.counts.tolist() == [0, 2]
    assert plan.complement(1).tolist() == [1]
    np.testing.assert_array_equal(plan.selection_matrix(1), [[1, 0, 0], [0, 0, 1]])
    assert plan.stacked_indices().tolist() == [3, 5]


def test_observation_matrix_round_trip(rng):
    plan = random_plan(5, 4, 2, rng)
    obs = ObservationSet(tuple(rng.standard_normal(2) for _ in range(4)))
    Y = obs.to_matrix(plan)
    obs2, plan2 = ObservationSet.from_matrix(Y)
    for t in range(4):
        np.testing.assert_array_equal(plan2[t], plan[t])
        np.testing.assert_array_equal(obs2[t], obs[t])


def test_observation_set_validation():
    with pytest.raises(ValueError):
        ObservationSet(([np.inf],))
    with pytest.raises(ValueError):
        ObservationSet(([1.0],), noise=(0.0,))
    obs = ObservationSet(([1.0], [2.0]))
    with pytest.raises(ValueError):
        obs.check_plan(SamplingPlan(3, ([0], [0, 1])))


def test_random_knn_graph_valid():
    g = random_knn_graph(30, 5, 0)
    check_adjacency(g.adjacency)
    assert np.all((g.adjacency > 0).sum(axis=1) >= 5)
    np.testing.assert_array_equal(g.adjacency, random_knn_graph(30, 5, 0).adjacency)


def test_generator_reproducible():
    g = random_knn_graph(10, 3, 1)
    r = SpectralMap("diffusion", sigma2=1.0)
    a = generate_smooth_signal(g, r, 1.0, seed=3, n_slots=6)
    np.testing.assert_array_equal(a, generate_smooth_signal(g, r, 1.0, seed=3, n_slots=6))
    assert a.shape == (10, 6)
    with pytest.raises(ValueError):
        generate_smooth_signal(g, r, 0.0, seed=3, n_slots=6)


def test_generator_strong_temporal_smoothness():
    # relative change between slots scales like (r / s) ** 0.25 with r(0) = 1
    g = random_knn_graph(20, 4, 2)
    worst = []
    for s in (1.0, 1e2, 1e4, 1e6):
        F = generate_smooth_signal(g, SpectralMap("diffusion", sigma2=1.0), s, seed=0, n_slots=30)
        rel = np.linalg.norm(np.diff(F, axis=1), axis=0) / np.linalg.norm(F[:, :-1], axis=0)
        worst.append(rel.max())
    assert np.all(np.diff(worst) < 0)
    assert worst[2] < 0.1
    assert worst[3] < 0.05


def test_generator_disconnected_components():
    W = np.zeros((6, 6))
    W[:3, :3] = 1 - np.eye(3)
    W[3:, 3:] = 1 - np.eye(3)
    r = SpectralMap("regularized-laplacian", sigma2=1e3)
    F = generate_smooth_signal(Graph(W), r, 1e-3, seed=0, n_slots=20)
    ind = np.zeros((6, 2))
    ind[:3, 0] = ind[3:, 1] = 1 / np.sqrt(3)
    proj = ind @ (ind.T @ F)
    assert np.sum(proj ** 2) / np.sum(F ** 2) > 0.9


def test_generator_population_calibration():
    # E[f.T K^{-1} f] = N T, so the sample mean over many draws is close
    from graphtime.graph import scaled_identity_bridges
    from graphtime.kernels import timevarying_kernel_inverse

    g = random_knn_graph(6, 3, 4)
    r = SpectralMap("diffusion", sigma2=2.0)
    k = timevarying_kernel_inverse(g.adjacency, r, scaled_identity_bridges(6, 5, 3.0), n_slots=5)
    vals = []
    for seed in range(400):
        f = generate_smooth_signal(g, r, 3.0, seed=seed, n_slots=5).T.ravel()
        vals.append(f @ k.inverse_matrix @ f)
    assert np.mean(vals) == pytest.approx(30, rel=0.05)


def _small_config(**kw):
    base = dict(data={"n_vertices": 10, "n_slots": 6, "k": 3, "graph_seed": 0,
                      "spatial": {"family": "diffusion", "sigma2": 3.24}, "s": 10.0},
                sampling={"type": "fixed-random", "m": 4}, noise_std=0.1, mu=0.0025)
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(estimator="lms")
    with pytest.raises(ConfigError):
        ExperimentConfig(mu=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(noise_std=-1)


def test_config_id_ignores_seed():
    a, b = _small_config(seed=1), _small_config(seed=2)
    assert a.config_id() == b.config_id()
    assert a.config_id() != _small_config(mu=0.1).config_id()


def test_grid_of_one_gives_one_row():
    res = sweep([_small_config()])
    assert len(res) == 1 and res[0].error is None and len(res[0].nmse) == 6


def test_grid_dotted_axes():
    cfgs = grid(_small_config(), **{"kernel.bridges.s": [0.1, 1.0], "seed": [0, 1, 2]})
    assert len(cfgs) == 6
    assert {c.kernel["bridges"]["s"] for c in cfgs} == {0.1, 1.0}
    assert len({c.config_id() for c in cfgs}) == 2


def test_sweep_records_failures_and_continues():
    bad = _small_config(sampling={"type": "fixed-random", "m": 99})
    res = sweep([bad, _small_config()])
    assert res[0].error is not None and "sampling.m" in res[0].error
    assert res[1].error is None


def test_sweep_deterministic_and_parallel():
    cfgs = grid(_small_config(), seed=[0, 1, 2])
    serial = sweep(cfgs, workers=1)
    parallel = sweep(cfgs, workers=2)
    for a, b in zip(serial, parallel):
        assert (a.config_id, a.seed) == (b.config_id, b.seed)
        np.testing.assert_array_equal(a.nmse, b.nmse)


@pytest.mark.parametrize("estimator", ["kkf", "batch", "instantaneous", "online-closedform"])
def test_every_estimator_runs(estimator):
    r = run_experiment(_small_config(estimator=estimator))
    assert r.error is None and np.all(np.isfinite(r.nmse))


def test_nmse_decreases_with_more_samples():
    N = 24
    means = []
    for m in (N // 4, N // 2, 3 * N // 4):
        cfgs = grid(_small_config(
            data={"n_vertices": N, "n_slots": 20, "k": 5, "graph_seed": 0,
                  "spatial": {"family": "diffusion", "sigma2": 3.24}, "s": 10.0},
            sampling={"type": "fixed-random", "m": m}, mu=0.01 / m,
            kernel={"type": "timevarying", "spatial": {"family": "diffusion", "sigma2": 3.24},
                    "bridges": {"type": "scaled-identity", "s": 10.0}}),
            seed=list(range(20)))
        means.append(np.mean([r.nmse[-1] for r in sweep(cfgs)]))
    assert means[0] >= means[1] >= means[2]
