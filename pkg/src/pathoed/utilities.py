"""Path labels, black-box utility helpers and utility tables.

A utility is any callable mapping a path (tuple of 0-based vertices) to a
float. Utilities are assumed pure.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, EvaluationError

Path = tuple
Utility = Callable[[tuple], float]

__all__ = [
    "CachedUtility",
    "NodeFieldUtility",
    "UtilityTable",
    "evaluate_utilities",
    "format_path",
    "load_utility_table",
    "parse_path",
]


def format_path(path: Sequence[int]) -> str:
    """Dash-joined 1-based label, e.g. ``(0, 2, 1) -> "1-3-2"``."""
    return "-".join(str(int(v) + 1) for v in path)


def parse_path(label: str) -> tuple[int, ...]:
    try:
        nodes = tuple(int(tok) - 1 for tok in label.strip().split("-"))
    except ValueError:
        raise ConfigError(f"malformed path label {label!r}") from None
    if any(v < 0 for v in nodes):
        raise ConfigError(f"path label {label!r} must use 1-based vertices")
    return nodes


class NodeFieldUtility:
    """Sum of a per-vertex scalar field along the path."""

    def __init__(self, field):
        self.field = np.asarray(field, dtype=float)

    def __call__(self, path) -> float:
        return float(sum(self.field[v] for v in path))


class UtilityTable:
    """Utility backed by an explicit ``path -> value`` table."""

    def __init__(self, values: dict):
        self.values = {tuple(int(v) for v in k): float(x) for k, x in values.items()}

    def __call__(self, path) -> float:
        try:
            return self.values[tuple(path)]
        except KeyError:
            raise ConfigError(f"path {format_path(path)} missing from utility table") from None

    def __len__(self):
        return len(self.values)


def load_utility_table(text: str) -> UtilityTable:
    """Parse ``path,utility`` CSV rows; a header row is optional."""
    values = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) < 2:
            raise ConfigError(f"utility table line {lineno}: expected 'path,utility'")
        try:
            value = float(row[1])
        except ValueError:
            if lineno == 1:
                continue  # header
            raise ConfigError(f"utility table line {lineno}: bad value {row[1]!r}") from None
        values[parse_path(row[0])] = value
    if not values:
        raise ConfigError("utility table is empty")
    return UtilityTable(values)


class CachedUtility:
    """Memoize a pure utility by path."""

    def __init__(self, utility: Utility):
        self.utility = utility
        self.cache: dict = {}

    def __call__(self, path) -> float:
        key = tuple(path)
        val = self.cache.get(key)
        if val is None:
            val = self.cache[key] = self.utility(key)
        return val


def evaluate_utilities(utility: Utility, paths: Iterable, threads: int = 1) -> np.ndarray:
    """Evaluate ``utility`` on every path, in order.

    With ``threads > 1`` evaluations run concurrently; results keep input
    order. Non-finite values raise :class:`EvaluationError`.
    """
    paths = [tuple(p) for p in paths]
    if threads > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(utility, paths))
    else:
        values = [utility(p) for p in paths]
    out = np.empty(len(paths))
    for i, (p, v) in enumerate(zip(paths, values)):
        v = float(v)
        if not math.isfinite(v):
            raise EvaluationError(p, v)
        out[i] = v
    return out
