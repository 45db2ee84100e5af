"""Seeded i.i.d. path sampling from a :class:`PathDistribution`.

Sample ``k`` consumes row ``k`` of a ``(count, n)`` block of uniforms drawn
from a PCG64 stream seeded by ``seed``; row ``k`` depends only on
``(seed, k)``, so a sample never changes when ``count`` grows and batches
can be split across workers without changing results.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .policy import PathDistribution

__all__ = ["sample_paths", "sample_array"]


def _uniforms(seed: int, count: int, n: int) -> np.ndarray:
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError(f"seed {seed} outside the unsigned 64-bit range")
    return np.random.Generator(np.random.PCG64(seed)).random((count, n))


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    # inverse CDF; zero-width bins are never selected with side="right"
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    return np.minimum(idx, len(cum) - 1)


def sample_array(dist: PathDistribution, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` paths as a ``(count, n)`` integer array."""
    count = int(count)
    if count < 0:
        raise ConfigError("count must be non-negative")
    n = dist.path_length
    paths = np.zeros((count, n), dtype=np.int64)
    if count == 0:
        return paths
    u = _uniforms(int(seed), count, n)

    pi = dist.initial_probabilities()
    support = np.flatnonzero(pi > 0)
    paths[:, 0] = support[_draw(np.cumsum(pi[support]), u[:, 0])]

    k = dist.order
    for s in range(1, n):
        lo = s - k if dist._is_mixture_step(s) else s - 1
        windows, inverse = np.unique(paths[:, lo:s], axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for g, window in enumerate(windows):
            rows = np.flatnonzero(inverse == g)
            # the conditional only reads the trailing window of the prefix
            cands, probs = dist.next_distribution(_pad(window, s), step=s + 1)
            paths[rows, s] = cands[_draw(np.cumsum(probs), u[rows, s])]
    return paths


def _pad(window: np.ndarray, s: int) -> tuple[int, ...]:
    return (-1,) * (s - len(window)) + tuple(int(v) for v in window)


def sample_paths(dist: PathDistribution, count: int, seed: int) -> list[tuple[int, ...]]:
    """Draw ``count`` i.i.d. paths (0-based vertex tuples) in ordinal order."""
    return [tuple(row) for row in sample_array(dist, count, seed).tolist()]
