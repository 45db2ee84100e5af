"""Projected stochastic gradient optimization of path policies.

Each iteration samples ``N_ens`` paths from the current policy, evaluates
the black-box utility, forms the score-function gradient estimate
``g = mean(U(z) grad log P(z))`` and ``d = mean(grad log P(z))``, subtracts
the variance-minimizing baseline ``b d`` and takes a step rescaled so the
parameters stay in the unit box. Lag weights are renormalized afterwards.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BaselineUndefinedError, ConfigError, PathOEDError
from .policy import LagMode, PathDistribution, PolicyParams
from .sampler import sample_paths
from .utilities import Utility, evaluate_utilities

__all__ = [
    "IterationRecord",
    "OptimizationAborted",
    "OptimizationResult",
    "OptimizerConfig",
    "OptimizerTrace",
    "TRACE_COLUMNS",
    "optimal_baseline",
    "run",
    "scaling_projector",
    "stochastic_gradient",
]

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "mean_utility", "min_utility", "q25", "median", "q75",
                 "max_utility", "baseline", "grad_norm", "update_norm", "wall_ms")


@dataclass
class OptimizerConfig:
    mode: str = "minimize"
    sample_size: int = 32
    baseline_batches: int = 1
    # False: every baseline batch is drawn independently of the gradient sample
    baseline_same_sample: bool = True
    step_size: float = 0.1
    schedule: str = "constant"
    max_iterations: int = 300
    update_norm_tol: float = 1e-12
    final_sample_size: int = 32
    seed: int = 0
    threads: int = 1

    def validate(self) -> None:
        if self.mode not in ("minimize", "maximize"):
            raise ConfigError(f"mode must be 'minimize' or 'maximize', got {self.mode!r}")
        if not 0 < self.step_size <= 1:
            raise ConfigError(f"step size must lie in (0, 1], got {self.step_size!r}")
        if self.schedule not in ("constant", "sqrt"):
            raise ConfigError(f"unknown step schedule {self.schedule!r}")
        if self.sample_size < 1 or self.final_sample_size < 1:
            raise ConfigError("sample sizes must be >= 1")
        if self.baseline_batches < 0:
            raise ConfigError("baseline_batches must be >= 0")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if not self.update_norm_tol > 0:
            raise ConfigError("update_norm_tol must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def sign(self) -> int:
        return 1 if self.mode == "maximize" else -1

    def step(self, iteration: int) -> float:
        if self.schedule == "sqrt":
            return self.step_size / math.sqrt(iteration + 1)
        return self.step_size


@dataclass
class IterationRecord:
    iteration: int
    utilities: np.ndarray
    baseline: float
    grad_norm: float
    update_norm: float
    wall_ms: float

    def row(self) -> list:
        u = self.utilities
        q25, med, q75 = np.quantile(u, [0.25, 0.5, 0.75])
        return [self.iteration, float(u.mean()), float(u.min()), float(q25), float(med),
                float(q75), float(u.max()), self.baseline, self.grad_norm,
                self.update_norm, self.wall_ms]


@dataclass
class OptimizerTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, record: IterationRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration numbers must increase")
        self.records.append(record)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in self.records:
            writer.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in rec.row()])
        return buf.getvalue()


@dataclass
class OptimizationResult:
    optimal_params: PolicyParams
    best_path: tuple
    best_utility: float
    final_sample: list
    trace: OptimizerTrace
    converged: bool = False


class OptimizationAborted(PathOEDError):
    """A run failed part way; ``trace`` holds the completed iterations."""

    def __init__(self, cause: Exception, trace: OptimizerTrace, params: PolicyParams):
        super().__init__(f"optimization aborted after {len(trace)} iterations: {cause}")
        self.cause = cause
        self.trace = trace
        self.params = params


def _score_matrix(dist: PathDistribution, paths) -> np.ndarray:
    return np.vstack([dist.grad_log_pmf(p).to_vector() for p in paths])


def stochastic_gradient(dist: PathDistribution, utility: Utility, paths,
                        values=None, threads: int = 1):
    """Score-function estimate ``g_hat`` and mean score ``d`` over ``paths``.

    ``values`` may carry precomputed utilities for ``paths``.
    """
    paths = [tuple(p) for p in paths]
    if not paths:
        raise ConfigError("need at least one path")
    if values is None:
        values = evaluate_utilities(utility, paths, threads=threads)
    scores = _score_matrix(dist, paths)
    g_hat = (np.asarray(values)[:, None] * scores).mean(axis=0)
    d = scores.mean(axis=0)
    return g_hat, d


def optimal_baseline(g_hat_batches, d_batches) -> float:
    """``sum_i g[i]^T d[i] / sum_i d[i]^T d[i]`` over batches."""
    g_hat_batches = [np.asarray(g) for g in g_hat_batches]
    d_batches = [np.asarray(d) for d in d_batches]
    if not g_hat_batches or len(g_hat_batches) != len(d_batches):
        raise ConfigError("need matching, non-empty gradient and score batches")
    num = sum(float(g @ d) for g, d in zip(g_hat_batches, d_batches))
    den = sum(float(d @ d) for d in d_batches)
    if den <= 0:
        raise BaselineUndefinedError("mean score is zero in every batch")
    return num / den


def scaling_projector(theta, step, direction_sign: int = 1) -> np.ndarray:
    """Scale ``step`` so that ``theta + sign * step`` stays in ``[0, 1]``.

    The whole vector is shrunk by the most restrictive coordinate, which
    preserves the step direction.
    """
    if isinstance(theta, PolicyParams):
        theta = theta.to_vector()
    theta = np.asarray(theta, dtype=float)
    step = np.asarray(step, dtype=float)
    trial = theta + direction_sign * step
    mag = np.abs(step)
    s = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        over = trial > 1
        if np.any(over):
            s = min(s, float(np.min((1 - theta[over]) / mag[over])))
        under = trial < 0
        if np.any(under):
            s = min(s, float(np.min(theta[under] / mag[under])))
    return s * step


def _finalize_vector(params: PolicyParams, vec: np.ndarray) -> PolicyParams:
    vec = np.clip(vec, 0.0, 1.0)
    new = params.with_vector(vec)
    if new.lag_weights is not None and new.lag_mode is LagMode.OPTIMIZED:
        total = new.lag_weights.sum()
        if total <= 0:
            raise ConfigError("lag weights collapsed to zero")
        new.lag_weights = new.lag_weights / total
    return new


def _lag_mask(params: PolicyParams) -> np.ndarray | None:
    if params.lag_weights is None or params.lag_mode is LagMode.OPTIMIZED:
        return None
    mask = np.ones(params.size, dtype=bool)
    mask[-len(params.lag_weights):] = False
    return mask


def _mask(g, d, mask) -> None:
    if mask is not None:
        g[~mask] = 0.0
        d[~mask] = 0.0


def run(dist: PathDistribution, utility: Utility, config: OptimizerConfig,
        callback=None) -> OptimizationResult:
    """Optimize the policy parameters of ``dist`` for ``utility``.

    Stops after ``max_iterations`` or once the parameter update norm falls
    below ``update_norm_tol``; then samples ``final_sample_size`` paths from
    the final policy and returns the best one (first on ties).
    """
    config.validate()
    params = dist.params.copy()
    trace = OptimizerTrace()
    mask = _lag_mask(params)
    # independent, reproducible seeds: one stream per (iteration, batch)
    seeds = np.random.SeedSequence(config.seed)
    converged = False
    current = dist

    def make(p):
        return PathDistribution(dist.kind, dist.mesh, p, dist.path_length, dist.order, dist.reach)

    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        try:
            nb = config.baseline_batches
            it_seeds = seeds.spawn(1)[0].generate_state(nb + 1, np.uint64)
            paths = sample_paths(current, config.sample_size, int(it_seeds[0]))
            values = evaluate_utilities(utility, paths, threads=config.threads)
            g_hat, d = stochastic_gradient(current, utility, paths, values)
            _mask(g_hat, d, mask)
            b = 0.0
            if nb >= 1:
                gs, ds = ([g_hat], [d]) if config.baseline_same_sample else ([], [])
                for j in range(1, nb + 1 - len(gs)):
                    extra = sample_paths(current, config.sample_size, int(it_seeds[j]))
                    g2, d2 = stochastic_gradient(current, utility, extra, threads=config.threads)
                    _mask(g2, d2, mask)
                    gs.append(g2)
                    ds.append(d2)
                try:
                    b = optimal_baseline(gs, ds)
                except BaselineUndefinedError:
                    b = 0.0
            direction = g_hat - b * d
            theta = params.to_vector()
            update = config.step(it) * scaling_projector(theta, direction, config.sign)
            new_params = _finalize_vector(params, theta + config.sign * update)
            update_norm = float(np.linalg.norm(new_params.to_vector() - theta))
            params = new_params
            current = make(params)
        except PathOEDError as exc:
            raise OptimizationAborted(exc, trace, params) from exc
        rec = IterationRecord(it, values, float(b), float(np.linalg.norm(direction)),
                              update_norm, (time.perf_counter() - t0) * 1e3)
        trace.append(rec)
        if callback is not None:
            callback(rec, params)
        log.debug("iteration %d: median utility %.6g, |g| %.3g, |update| %.3g",
                  it, np.median(values), rec.grad_norm, update_norm)
        if update_norm < config.update_norm_tol:
            converged = True
            break

    try:
        final_seed = int(seeds.spawn(1)[0].generate_state(1, np.uint64)[0])
        final = sample_paths(current, config.final_sample_size, final_seed)
        final_values = evaluate_utilities(utility, final, threads=config.threads)
    except PathOEDError as exc:
        raise OptimizationAborted(exc, trace, params) from exc
    pick = np.argmax if config.mode == "maximize" else np.argmin
    best = int(pick(final_values))
    return OptimizationResult(params, final[best], float(final_values[best]),
                              list(zip(final, final_values.tolist())), trace, converged)
