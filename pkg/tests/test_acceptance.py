"""Acceptance criteria 1-7, each at its stated tolerance and runtime budget.

Each test records a one-line verdict; the lines are printed in the pytest
terminal summary and also when this file is run as a script.
"""

import math
import time

import numpy as np
import pytest

from conftest import example_dist, example_mesh, random_mesh, random_params
from pathoed.bayes import BayesUtility, build_desk_instance
from pathoed.diagnostics import estimator_replicas, finite_difference_error, tangent_project
from pathoed.optimizer import OptimizerConfig, run
from pathoed.oracle import exact_gradient, global_optimum
from pathoed.policy import PathDistribution, forced_start_params, uniform_params
from pathoed.sampler import sample_array
from pathoed.utilities import CachedUtility

VERDICTS: dict[int, str] = {}


def _record(num, ok, detail, elapsed, budget):
    ok = ok and elapsed < budget
    VERDICTS[num] = (f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}  "
                     f"[{elapsed:.2f}s / budget {budget:g}s]")
    return ok


def test_criterion_1_first_order_fixture():
    t0 = time.perf_counter()
    published = [1, 1, 2, 8, 6, 6, 2, 2, 8, 12, 6, 6]
    support = example_dist("first").enumerate_support()
    probs = np.array([p for _, p in support])
    err = float(np.max(np.abs(probs - np.array(published) / 60))) if len(probs) == 12 else math.inf
    total = abs(probs.sum() - 1)
    ok = _record(1, err <= 1e-12 and total <= 1e-12,
                 f"12 probabilities max err {err:.1e}, |sum-1| {total:.1e}",
                 time.perf_counter() - t0, 1)
    assert ok, VERDICTS[1]


def test_criterion_2_support_sizes_and_two_step_matrix():
    t0 = time.perf_counter()
    sizes = {kind: len(example_dist(kind).enumerate_support())
             for kind in ("first", "higher", "generalized")}
    expect = np.array([[2, 0, 9, 1, 0], [6, 0, 6, 0, 0], [0, 2, 2, 8, 0],
                       [12, 0, 0, 0, 0], [0, 0, 6, 6, 0]]) / 12
    err = float(np.max(np.abs(example_dist("generalized").step_matrix(2) - expect)))
    good = sizes == {"first": 12, "higher": 24, "generalized": 19} and err <= 1e-12
    ok = _record(2, good, f"support sizes {sizes}, two-step matrix max err {err:.1e}",
                 time.perf_counter() - t0, 1)
    assert ok, VERDICTS[2]


def test_criterion_3_higher_order_fixtures():
    t0 = time.perf_counter()
    h = example_dist("higher").pmf((0, 1, 1))
    g = example_dist("generalized").pmf((0, 1, 0))
    g0 = example_dist("generalized").pmf((0, 1, 1))
    e1, e2 = abs(h - 1 / 540), abs(g - 1 / 540)
    ok = _record(3, e1 <= 1e-12 and e2 <= 1e-12 and g0 == 0.0,
                 f"Raftery err {e1:.1e}, generalized err {e2:.1e}, excluded path P={g0}",
                 time.perf_counter() - t0, 1)
    assert ok, VERDICTS[3]


def test_criterion_4_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_fd, worst_score = 0.0, 0.0
    configs = [("first", 1)] + [(kind, k) for kind in ("higher", "generalized") for k in (1, 2, 3)]
    for kind, k in configs:
        for _ in range(50):
            m = random_mesh(rng, int(rng.integers(3, 7)))
            p = random_params(rng, m, None if kind == "first" else k)
            d = PathDistribution(kind, m, p, k + int(rng.integers(1, 3)), k)
            support = d.enumerate_support()
            path = support[int(rng.integers(len(support)))][0]
            worst_fd = max(worst_fd, finite_difference_error(d, path))
            total = sum(pr * d.grad_log_pmf(z).to_vector() for z, pr in support)
            worst_score = max(worst_score, float(np.max(np.abs(tangent_project(d, total)))))
    ok = _record(4, worst_fd < 1e-5 and worst_score < 1e-8,
                 f"{50 * len(configs)} triples, max FD rel err {worst_fd:.1e}, "
                 f"max score-identity residual {worst_score:.1e}",
                 time.perf_counter() - t0, 30)
    assert ok, VERDICTS[4]


def test_criterion_5_estimator_statistics():
    t0 = time.perf_counter()
    d = example_dist("first")
    U = lambda z: float(z[0] + 1)  # noqa: E731
    exact = exact_gradient(d, U)
    raw, based = estimator_replicas(d, U, replicas=64, sample_size=32, seed=0)
    worst = 0.0
    for est in (raw, based):
        se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
        gap = np.abs(est.mean(axis=0) - exact)
        live = se > 0
        if np.any(gap[~live] > 1e-12):
            worst = math.inf
        worst = max(worst, float(np.max(gap[live] / se[live])))
    v_raw = float(raw.var(axis=0, ddof=1).sum())
    v_base = float(based.var(axis=0, ddof=1).sum())
    ok = _record(5, worst <= 3 and v_base < v_raw,
                 f"max |mean-exact|/SE {worst:.2f}, total variance raw {v_raw:.3f} "
                 f"vs baselined {v_base:.3f}", time.perf_counter() - t0, 60)
    assert ok, VERDICTS[5]


def test_criterion_6_end_to_end_desk_optimization():
    t0 = time.perf_counter()
    mesh, model = build_desk_instance()
    U = CachedUtility(BayesUtility(model, "D"))
    bf = global_optimum(mesh, 4, U)
    threshold = float(np.quantile(bf.values, 0.01))
    hits, drops = 0, 0
    for seed in range(10):
        d = PathDistribution("first", mesh, uniform_params(mesh), 4)
        res = run(d, U, OptimizerConfig(sample_size=32, step_size=0.1, max_iterations=300,
                                        update_norm_tol=1e-12, seed=seed))
        hits += res.best_utility <= threshold
        recs = res.trace.records
        # a run that stopped earlier is judged on its last iteration
        later = recs[min(50, len(recs) - 1)]
        drops += np.median(later.utilities) < np.median(recs[0].utilities)
    ok = _record(6, hits >= 9 and drops == 10,
                 f"{hits}/10 runs in lowest 1% (<= {threshold:.6f}), "
                 f"{drops}/10 median drops by iteration 50", time.perf_counter() - t0, 300)
    assert ok, VERDICTS[6]


def test_criterion_7_forced_start():
    t0 = time.perf_counter()
    mesh = example_mesh()
    bad = []
    for kind, order in (("first", None), ("higher", 2), ("generalized", 2)):
        for start in range(mesh.num_vertices):
            d = PathDistribution(kind, mesh, forced_start_params(mesh, start, order), 3, order)
            if not np.all(sample_array(d, 10_000, seed=start)[:, 0] == start):
                bad.append((kind, start + 1))
    ok = _record(7, not bad, f"3 kinds x {mesh.num_vertices} starts x 10^4 draws, "
                 f"violations {bad}", time.perf_counter() - t0, 60)
    assert ok, VERDICTS[7]


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
    for n in sorted(VERDICTS):
        print(VERDICTS[n])
