"""Numerical checks of policy gradients and gradient estimators.

Shared by the ``gradcheck`` command and the test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optimizer import optimal_baseline, stochastic_gradient
from .policy import LagMode, PathDistribution
from .sampler import sample_paths

__all__ = [
    "CheckResult",
    "estimator_replicas",
    "fd_directions",
    "finite_difference_error",
    "relative_error",
    "score_identity_residual",
    "tangent_project",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (threshold {self.threshold:.1e})"


def relative_error(approx, exact) -> float:
    """Max over components of ``|a - e| / max(1, |e|)``."""
    approx, exact = np.asarray(approx, float), np.asarray(exact, float)
    if approx.size == 0:
        return 0.0
    return float(np.max(np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))))


def fd_directions(dist: PathDistribution) -> np.ndarray:
    """Unit coordinate directions, except lag weights move along ``e_1 - e_i``.

    Lag weights must keep summing to one, so only simplex-tangent
    perturbations are admissible for them. Fixed lag weights are skipped.
    """
    size = dist.num_params
    k = 0 if dist.params.lag_weights is None else len(dist.params.lag_weights)
    base = size - k
    dirs = [np.eye(size)[i] for i in range(base)]
    for i in range(1, k if dist.params.lag_mode is LagMode.OPTIMIZED else 0):
        e = np.zeros(size)
        e[base] = 1.0
        e[base + i] = -1.0
        dirs.append(e)
    return np.array(dirs).reshape(-1, size)


def _safe_step(theta: np.ndarray, direction: np.ndarray, h: float) -> float | None:
    moving = direction != 0
    lo = np.min(np.where(direction[moving] > 0, theta[moving], 1 - theta[moving]))
    hi = np.min(np.where(direction[moving] > 0, 1 - theta[moving], theta[moving]))
    room = min(lo, hi)
    if room <= 0:
        return None  # exact 0 or 1 changes the support; no two-sided difference exists
    return min(h, room / 2)


def finite_difference_error(dist: PathDistribution, path, h: float = 1e-6) -> float:
    """Max relative error between central differences of ``log_pmf`` and the gradient."""
    theta = dist.params.to_vector()
    grad = dist.grad_log_pmf(path).to_vector()
    fd, an = [], []
    for e in fd_directions(dist):
        step = _safe_step(theta, e, h)
        if step is None:
            continue
        vals = []
        for sgn in (1, -1):
            p = dist.params.with_vector(theta + sgn * step * e)
            d = PathDistribution(dist.kind, dist.mesh, p, dist.path_length, dist.order, dist.reach)
            vals.append(d.log_pmf(path))
        fd.append((vals[0] - vals[1]) / (2 * step))
        an.append(grad @ e)
    return relative_error(fd, an)


def tangent_project(dist: PathDistribution, vec) -> np.ndarray:
    """Remove the component of the lag-weight block normal to the simplex."""
    vec = np.array(vec, dtype=float)
    if dist.params.lag_weights is not None:
        k = len(dist.params.lag_weights)
        vec[-k:] -= vec[-k:].mean()
    return vec


def score_identity_residual(dist: PathDistribution, cap: int = 1_000_000) -> float:
    """``|| sum_z P(z) grad log P(z) ||_inf`` over the full support.

    The lag-weight block is measured on the simplex tangent. Its raw sum is
    ``n - k`` per component because ``log P`` is not homogeneous in the
    unconstrained coordinates.
    """
    total = np.zeros(dist.num_params)
    for path, prob in dist.enumerate_support(cap):
        total += prob * dist.grad_log_pmf(path).to_vector()
    return float(np.max(np.abs(tangent_project(dist, total)), initial=0.0))


def estimator_replicas(dist: PathDistribution, utility, replicas: int = 64,
                       sample_size: int = 32, seed: int = 0, baseline_batches: int = 1,
                       same_sample: bool = False):
    """Raw and baselined gradient estimates over independent replicas.

    The baseline is estimated from ``baseline_batches`` batches of
    ``sample_size`` paths. With ``same_sample`` the first batch is the
    gradient sample itself; the baselined estimate is then orthogonal to
    ``d`` and no longer unbiased. Returns two ``(replicas, num_params)``
    arrays.
    """
    raw = np.empty((replicas, dist.num_params))
    based = np.empty_like(raw)
    for r, ss in enumerate(np.random.SeedSequence(seed).spawn(replicas)):
        states = ss.generate_state(baseline_batches + 1, np.uint64)
        paths = sample_paths(dist, sample_size, int(states[0]))
        g, d = stochastic_gradient(dist, utility, paths)
        gs, ds = ([g], [d]) if same_sample else ([], [])
        for j in range(1, baseline_batches + 1 - len(gs)):
            extra = sample_paths(dist, sample_size, int(states[j]))
            g2, d2 = stochastic_gradient(dist, utility, extra)
            gs.append(g2)
            ds.append(d2)
        b = 0.0
        if gs and sum(x @ x for x in ds) > 0:
            b = optimal_baseline(gs, ds)
        raw[r] = g
        based[r] = g - b * d
    return raw, based
