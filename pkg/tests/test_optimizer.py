import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import example_dist
from pathoed.diagnostics import estimator_replicas
from pathoed.errors import BaselineUndefinedError, ConfigError, EvaluationError
from pathoed.navmesh import NavMesh, build_grid_mesh
from pathoed.optimizer import (TRACE_COLUMNS, OptimizationAborted, OptimizerConfig,
                               optimal_baseline, run, scaling_projector, stochastic_gradient)
from pathoed.oracle import exact_expectation, exact_gradient, global_optimum
from pathoed.policy import PathDistribution, PolicyParams, uniform_params
from pathoed.utilities import NodeFieldUtility

START_INDEX = lambda z: float(z[0] + 1)  # noqa: E731


# -- projector -----------------------------------------------------------------------

def test_projector_in_bounds():
    assert scaling_projector(np.array([0.5]), np.array([0.2]), 1).tolist() == [0.2]


def test_projector_upper():
    out = scaling_projector(np.array([0.9, 0.5]), np.array([0.2, 0.2]), 1)
    assert out == pytest.approx([0.1, 0.1], abs=1e-15)


def test_projector_lower():
    out = scaling_projector(np.array([0.1]), np.array([0.4]), -1)
    assert out == pytest.approx([0.1], abs=1e-15)
    assert 0.1 - out[0] == pytest.approx(0.0, abs=1e-15)


def test_projector_accepts_params():
    p = PolicyParams([0.9, 0.5], np.zeros(0))
    assert scaling_projector(p, np.array([0.2, 0.2]), 1) == pytest.approx([0.1, 0.1])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(-50, 50)), min_size=1, max_size=12),
       st.sampled_from([1, -1]))
def test_projector_feasible_and_parallel(pairs, sign):
    theta = np.array([t for t, _ in pairs])
    step = np.array([g for _, g in pairs])
    out = scaling_projector(theta, step, sign)
    new = theta + sign * out
    assert np.all(new >= -1e-12) and np.all(new <= 1 + 1e-12)
    s = np.linalg.norm(out) / np.linalg.norm(step) if np.linalg.norm(step) else 0.0
    assert 0 <= s <= 1 + 1e-15
    assert np.allclose(out, s * step, atol=1e-12)


# -- baseline ------------------------------------------------------------------------

def test_baseline_recovers_constant():
    d = np.array([0.3, -1.0, 2.0])
    assert optimal_baseline([2.5 * d], [d]) == pytest.approx(2.5)


def test_baseline_orthogonal_is_zero():
    assert optimal_baseline([np.array([1.0, 0.0])], [np.array([0.0, 2.0])]) == 0.0


def test_baseline_pools_batches():
    g = [np.array([1.0, 0.0]), np.array([0.0, 3.0])]
    d = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    assert optimal_baseline(g, d) == pytest.approx((1 + 3) / 2)


def test_baseline_zero_denominator():
    with pytest.raises(BaselineUndefinedError):
        optimal_baseline([np.ones(2)], [np.zeros(2)])


# -- stochastic gradient -------------------------------------------------------------

def test_constant_utility_gradient_is_scaled_score():
    d = example_dist("first")
    paths = [(0, 1, 2), (3, 2, 0), (0, 3, 2)]
    g, dd = stochastic_gradient(d, lambda z: 4.0, paths)
    assert np.allclose(g, 4.0 * dd, atol=1e-15)


def test_single_path_gradient():
    d = example_dist("higher")
    z = (0, 1, 1)
    g, dd = stochastic_gradient(d, START_INDEX, [z])
    assert np.allclose(g, 1.0 * d.grad_log_pmf(z).to_vector())
    assert np.allclose(dd, d.grad_log_pmf(z).to_vector())


def test_nonfinite_utility_names_path():
    with pytest.raises(EvaluationError, match="1-2-3"):
        stochastic_gradient(example_dist("first"), lambda z: float("nan"), [(0, 1, 2)])


def test_unbiased_raw_and_independent_baseline():
    d = example_dist("first")
    exact = exact_gradient(d, START_INDEX)
    raw, based = estimator_replicas(d, START_INDEX, 64, 32, seed=3)
    for est in (raw, based):
        se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
        live = se > 0
        assert np.all(np.abs(est.mean(0) - exact)[live] <= 3 * se[live])
        assert np.allclose(est.mean(0)[~live], exact[~live], atol=1e-12)


def test_variance_reduction():
    d = example_dist("first")
    raw, based = estimator_replicas(d, START_INDEX, 64, 32, seed=4)
    assert based.var(axis=0, ddof=1).sum() < raw.var(axis=0, ddof=1).sum()


def test_same_sample_baseline_is_orthogonal_to_score():
    d = example_dist("first")
    from pathoed.sampler import sample_paths
    g, dd = stochastic_gradient(d, START_INDEX, sample_paths(d, 32, seed=1))
    update = g - optimal_baseline([g], [dd]) * dd
    assert abs(update @ dd) < 1e-12 * (np.linalg.norm(g) * np.linalg.norm(dd))


# -- run -----------------------------------------------------------------------------

def test_config_validation():
    for bad in (dict(step_size=0), dict(step_size=1.5), dict(mode="up"), dict(sample_size=0),
                dict(baseline_batches=-1), dict(update_norm_tol=0), dict(schedule="cos")):
        with pytest.raises(ConfigError):
            OptimizerConfig(**bad).validate()


def test_sqrt_schedule():
    cfg = OptimizerConfig(step_size=0.2, schedule="sqrt")
    assert cfg.step(0) == 0.2 and cfg.step(3) == pytest.approx(0.1)


def test_constant_utility_leaves_parameters():
    d = example_dist("generalized")
    res = run(d, lambda z: 7.0, OptimizerConfig(max_iterations=20, seed=1))
    assert np.allclose(res.optimal_params.to_vector(), d.params.to_vector(), atol=1e-12)
    assert all(r.grad_norm < 1e-10 for r in res.trace.records)


def _toy():
    mesh = NavMesh(2, [(0, 1), (1, 0)])
    return PathDistribution("first", mesh, uniform_params(mesh), 2)


@pytest.mark.parametrize("mode", ["maximize", "minimize"])
def test_single_step_sign(mode):
    d = _toy()
    U = lambda z: float(z[0] == 0)  # noqa: E731
    before = exact_expectation(d, U)
    res = run(d, U, OptimizerConfig(mode=mode, max_iterations=1, seed=2))
    after = exact_expectation(PathDistribution("first", d.mesh, res.optimal_params, 2), U)
    assert (after > before) if mode == "maximize" else (after < before)


def test_converges_to_forced_start():
    d = example_dist("first")
    U = lambda z: float(z[0] == 3)  # noqa: E731
    # with the same-sample baseline a batch of identical utilities gives a zero
    # update, which the update-norm rule reads as convergence
    res = run(d, U, OptimizerConfig(mode="maximize", seed=5, baseline_batches=0))
    final = PathDistribution("first", d.mesh, res.optimal_params, 3)
    assert final.initial_probabilities()[3] > 0.99
    assert res.best_path[0] == 3 and res.best_utility == 1.0


def test_node_field_optimum_in_lowest_percent():
    mesh = build_grid_mesh(3, 3, [(1, 1, 1, 1)])
    field = np.array([0.3, -0.2, 0.8, 0.1, 0.5, -0.9, 0.4, 0.2])
    U = NodeFieldUtility(field)
    bf = global_optimum(mesh, 4, U)
    d = PathDistribution("first", mesh, uniform_params(mesh), 4)
    res = run(d, U, OptimizerConfig(seed=0))
    assert res.best_utility <= np.quantile(bf.values, 0.01)


def test_feasibility_every_iteration():
    d = example_dist("generalized", n=4)
    seen = []

    def check(rec, params):
        vec = params.to_vector()
        assert np.all((vec >= 0) & (vec <= 1))
        assert abs(params.lag_weights.sum() - 1) <= 1e-12
        seen.append(rec.iteration)

    run(d, START_INDEX, OptimizerConfig(max_iterations=40, seed=3, step_size=0.5), callback=check)
    assert seen == list(range(len(seen))) and seen


def test_fixed_lag_weights_untouched():
    d = example_dist("higher", n=4, lag_mode="fixed")
    res = run(d, START_INDEX, OptimizerConfig(max_iterations=15, seed=3))
    assert np.array_equal(res.optimal_params.lag_weights, d.params.lag_weights)


@pytest.mark.parametrize("nb, same", [(0, True), (1, True), (1, False), (3, True), (3, False)])
def test_baseline_batch_settings_run(nb, same):
    cfg = OptimizerConfig(max_iterations=5, baseline_batches=nb, baseline_same_sample=same, seed=7)
    res = run(example_dist("first"), START_INDEX, cfg)
    assert len(res.trace) == 5
    if nb == 0:
        assert all(r.baseline == 0.0 for r in res.trace.records)


def test_deterministic_under_seed():
    d = example_dist("higher", n=4)
    a = run(d, START_INDEX, OptimizerConfig(max_iterations=10, seed=9))
    b = run(d, START_INDEX, OptimizerConfig(max_iterations=10, seed=9))
    assert np.array_equal(a.optimal_params.to_vector(), b.optimal_params.to_vector())
    assert a.final_sample == b.final_sample


def test_best_is_first_extremal_of_final_sample():
    res = run(example_dist("first"), START_INDEX, OptimizerConfig(max_iterations=3, seed=1))
    values = [u for _, u in res.final_sample]
    i = int(np.argmin(values))
    assert res.best_path == res.final_sample[i][0] and res.best_utility == values[i]


def test_trace_csv():
    res = run(example_dist("first"), START_INDEX, OptimizerConfig(max_iterations=4, seed=1))
    rows = list(csv.reader(io.StringIO(res.trace.to_csv())))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2, 3]
    for r in rows[1:]:
        vals = [float(x) for x in r]
        assert vals[2] <= vals[3] <= vals[4] <= vals[5] <= vals[6]


def test_abort_keeps_partial_trace():
    calls = {"n": 0}

    def flaky(z):
        calls["n"] += 1
        return float("inf") if calls["n"] > 32 * 3 else START_INDEX(z)

    with pytest.raises(OptimizationAborted) as info:
        run(example_dist("first"), flaky, OptimizerConfig(max_iterations=10, seed=1))
    assert len(info.value.trace) == 3
    assert isinstance(info.value.cause, EvaluationError)


def test_identical_utilities_stop_with_same_sample_baseline():
    res = run(example_dist("first"), lambda z: 1.0, OptimizerConfig(seed=0))
    assert res.converged and len(res.trace) == 1


def test_threads_do_not_change_result():
    d = example_dist("first")
    a = run(d, START_INDEX, OptimizerConfig(max_iterations=5, seed=2, threads=1))
    b = run(d, START_INDEX, OptimizerConfig(max_iterations=5, seed=2, threads=4))
    assert np.array_equal(a.optimal_params.to_vector(), b.optimal_params.to_vector())
