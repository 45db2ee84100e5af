"""Brute-force ground truth for small instances.

Exhaustive enumeration gives exact expectations, exact gradients of the
expected utility and the global optimum, against which the stochastic
machinery is checked.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import CapExceededError, ConfigError
from .navmesh import NavMesh
from .policy import DEFAULT_SUPPORT_CAP, PathDistribution
from .utilities import CachedUtility, Utility, evaluate_utilities, format_path

__all__ = [
    "BruteForceResult",
    "count_feasible_paths",
    "enumerate_feasible_paths",
    "exact_expectation",
    "exact_gradient",
    "global_optimum",
    "summary_line",
    "utility_quantiles",
    "write_bruteforce_csv",
]


def count_feasible_paths(mesh: NavMesh, n: int) -> int:
    """Number of ``n``-node walks, by propagating walk counts (exact integers)."""
    counts = [1] * mesh.num_vertices
    for _ in range(n - 1):
        nxt = [0] * mesh.num_vertices
        for (i, j) in mesh.arcs:
            nxt[i] += counts[j]
        counts = nxt
    return sum(counts)


def enumerate_feasible_paths(mesh: NavMesh, n: int,
                             cap: int = DEFAULT_SUPPORT_CAP) -> list[tuple[int, ...]]:
    """All walks of ``n`` vertices following mesh arcs, lexicographically."""
    if n < 1:
        raise ConfigError("path length must be >= 1")
    total = count_feasible_paths(mesh, n)
    if total > cap:
        raise CapExceededError(cap, total)
    out = []
    stack = [(v,) for v in range(mesh.num_vertices - 1, -1, -1)]
    while stack:
        prefix = stack.pop()
        if len(prefix) == n:
            out.append(prefix)
            continue
        for j in reversed(mesh.out_neighbors[prefix[-1]]):
            stack.append(prefix + (j,))
    return out


def exact_expectation(dist: PathDistribution, utility: Utility,
                      cap: int = DEFAULT_SUPPORT_CAP) -> float:
    """``sum_z P(z) U(z)`` over the support."""
    support = dist.enumerate_support(cap)
    probs = np.array([p for _, p in support])
    values = evaluate_utilities(utility, [z for z, _ in support])
    return float(probs @ values)


def exact_gradient(dist: PathDistribution, utility: Utility,
                   cap: int = DEFAULT_SUPPORT_CAP) -> np.ndarray:
    """Gradient of the expected utility, ``sum_z P(z) U(z) grad log P(z)``.

    Returned in the flat parameter layout of :class:`PolicyParams`.
    """
    support = dist.enumerate_support(cap)
    values = evaluate_utilities(utility, [z for z, _ in support])
    grad = np.zeros(dist.num_params)
    for (path, prob), u in zip(support, values):
        grad += (prob * u) * dist.grad_log_pmf(path).to_vector()
    return grad


class BruteForceResult:
    """Every feasible path with its utility, plus the extremal one."""

    def __init__(self, paths, values, mode: str):
        self.paths = paths
        self.values = np.asarray(values, dtype=float)
        self.mode = mode
        pick = np.argmin if mode == "minimize" else np.argmax
        best = int(pick(self.values))  # first extremal element on ties
        self.best_path = paths[best]
        self.best_value = float(self.values[best])
        self.sorted_values = np.sort(self.values)

    def __iter__(self):
        # unpacks as (best_path, best_value, sorted_values)
        return iter((self.best_path, self.best_value, self.sorted_values))

    def percentile_rank(self, value: float) -> float:
        """Fraction of feasible paths at least as good as ``value``."""
        if self.mode == "minimize":
            return float(np.mean(self.values <= value))
        return float(np.mean(self.values >= value))


def global_optimum(mesh: NavMesh, n: int, utility: Utility, mode: str = "minimize",
                   cap: int = DEFAULT_SUPPORT_CAP, threads: int = 1) -> BruteForceResult:
    """Evaluate ``utility`` on every feasible walk and return the extremum."""
    if mode not in ("minimize", "maximize"):
        raise ConfigError(f"unknown mode {mode!r}")
    paths = enumerate_feasible_paths(mesh, n, cap)
    values = evaluate_utilities(CachedUtility(utility), paths, threads=threads)
    return BruteForceResult(paths, values, mode)


def utility_quantiles(values) -> dict:
    values = np.asarray(values, dtype=float)
    q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    return {"count": int(values.size), "min": float(values.min()), "q1": float(q1),
            "median": float(med), "q3": float(q3), "max": float(values.max())}


def summary_line(values) -> str:
    q = utility_quantiles(values)
    return ("# summary count={count} min={min:.17g} q1={q1:.17g} median={median:.17g} "
            "q3={q3:.17g} max={max:.17g}").format(**q)


def write_bruteforce_csv(result: BruteForceResult) -> str:
    """CSV of ``path,utility`` rows followed by a quantile summary comment."""
    buf = io.StringIO()
    buf.write("path,utility\n")
    for path, value in zip(result.paths, result.values):
        buf.write(f"{format_path(path)},{value:.17g}\n")
    buf.write(summary_line(result.values) + "\n")
    return buf.getvalue()
