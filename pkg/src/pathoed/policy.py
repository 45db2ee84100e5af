"""Parametric Markov policies over fixed-length paths on a navigation mesh.

Three kinds are supported:

``first``
    memoryless chain; initial and transition distributions come from
    per-vertex and per-arc Bernoulli parameters through normalized odds
    ratios ``w = p / (1 - p)``.
``higher``
    Raftery mixture: after the first ``k`` nodes, the next node is drawn
    from ``sum_i lambda_i P(next | node i steps back)`` with one-step
    transition probabilities for every lag.
``generalized``
    as ``higher`` but lag ``i`` uses the ``i``-step transition probability,
    i.e. the sum over all ``i``-arc walks of the product of one-step
    transitions.

Parameters are stored sparsely: one entry per vertex for the start, one per
arc (by arc id, see :class:`~pathoed.navmesh.NavMesh`) for transitions and
optionally ``k`` lag weights. The flat parameter vector used by the
optimizer is ``[initial, transition, lag_weights]`` in that order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import (CapExceededError, ConfigError, DeadEndError,
                     DegenerateDistributionError, SupportError)
from .navmesh import NavMesh, ReachabilityIndex, build_reachability

__all__ = [
    "DEFAULT_SUPPORT_CAP",
    "LOG_ZERO",
    "LagMode",
    "LogPmfGradient",
    "PathDistribution",
    "PolicyKind",
    "PolicyParams",
    "dump_params",
    "enumerate_support",
    "forced_start_params",
    "grad_log_pmf",
    "initial_probabilities",
    "lag_weights_fixed_harmonic",
    "load_params",
    "log_pmf",
    "params_from_dense",
    "transition_probabilities",
    "uniform_params",
]

LOG_ZERO = -math.inf
CLAMP_EPS = 1e-12
DEFAULT_SUPPORT_CAP = 10_000_000
# structural probability floor used only to detect leaking (dead-end) mass
_MASS_TOL = 1e-9


class PolicyKind(str, Enum):
    FIRST_ORDER = "first"
    HIGHER_ORDER = "higher"
    GENERALIZED = "generalized"

    @classmethod
    def parse(cls, value) -> "PolicyKind":
        if isinstance(value, cls):
            return value
        aliases = {"first-order": "first", "higher-order": "higher",
                   "raftery": "higher", "generalized-higher-order": "generalized"}
        key = aliases.get(str(value).lower(), str(value).lower())
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown policy kind {value!r}") from None


class LagMode(str, Enum):
    OPTIMIZED = "opt"
    FIXED = "fixed"

    @classmethod
    def parse(cls, value) -> "LagMode":
        if isinstance(value, cls):
            return value
        aliases = {"optimized": "opt", "fixed-harmonic": "fixed", "harmonic": "fixed"}
        key = aliases.get(str(value).lower(), str(value).lower())
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown lag mode {value!r}") from None


def lag_weights_fixed_harmonic(k: int) -> np.ndarray:
    """Normalized harmonic lag weights ``(1/i) / sum_m (1/m)``."""
    if k < 1:
        raise ConfigError("order must be >= 1")
    inv = 1.0 / np.arange(1, k + 1)
    return inv / inv.sum()


@dataclass
class PolicyParams:
    initial: np.ndarray
    transition: np.ndarray
    lag_weights: np.ndarray | None = None
    lag_mode: LagMode = LagMode.OPTIMIZED

    def __post_init__(self):
        self.initial = np.array(self.initial, dtype=float)
        self.transition = np.array(self.transition, dtype=float)
        if self.lag_weights is not None:
            self.lag_weights = np.array(self.lag_weights, dtype=float)
        self.lag_mode = LagMode.parse(self.lag_mode)

    @property
    def order(self) -> int:
        return 1 if self.lag_weights is None else len(self.lag_weights)

    @property
    def size(self) -> int:
        return len(self.initial) + len(self.transition) + (
            0 if self.lag_weights is None else len(self.lag_weights))

    def to_vector(self) -> np.ndarray:
        parts = [self.initial, self.transition]
        if self.lag_weights is not None:
            parts.append(self.lag_weights)
        return np.concatenate(parts)

    def with_vector(self, vec) -> "PolicyParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ConfigError(f"parameter vector has shape {vec.shape}, expected ({self.size},)")
        n0, n1 = len(self.initial), len(self.initial) + len(self.transition)
        lag = None if self.lag_weights is None else vec[n1:].copy()
        return PolicyParams(vec[:n0].copy(), vec[n0:n1].copy(), lag, self.lag_mode)

    def copy(self) -> "PolicyParams":
        return self.with_vector(self.to_vector())

    def validate(self, mesh: NavMesh) -> None:
        """Raise :class:`ConfigError` unless the parameters define a valid policy."""
        if self.initial.shape != (mesh.num_vertices,):
            raise ConfigError(f"initial has shape {self.initial.shape}, "
                              f"expected ({mesh.num_vertices},)")
        if self.transition.shape != (mesh.num_arcs,):
            raise ConfigError(f"transition has shape {self.transition.shape}, "
                              f"expected ({mesh.num_arcs},)")
        vec = self.to_vector()
        if not np.all(np.isfinite(vec)):
            raise ConfigError("parameters must be finite")
        bad = np.flatnonzero((vec < 0) | (vec > 1))
        if bad.size:
            raise ConfigError(f"parameter value {vec[bad[0]]!r} outside [0, 1]")
        _check_group(self.initial, "initial parameters")
        for v in range(mesh.num_vertices):
            arcs = mesh.out_arcs(v)
            if len(arcs):
                _check_group(self.transition[arcs.start:arcs.stop],
                             f"transition parameters of v{v + 1}")
        if self.lag_weights is not None:
            if self.lag_weights.ndim != 1 or len(self.lag_weights) < 1:
                raise ConfigError("lag_weights must be a non-empty vector")
            if abs(self.lag_weights.sum() - 1.0) > 1e-12:
                raise ConfigError(f"lag weights sum to {self.lag_weights.sum()!r}, expected 1")


def _check_group(p: np.ndarray, what: str) -> None:
    if not np.any(p > 0):
        raise DegenerateDistributionError(f"{what}: all zero")
    if np.count_nonzero(p == 1.0) > 1:
        raise DegenerateDistributionError(f"{what}: more than one parameter equals 1")


def uniform_params(mesh: NavMesh, order: int | None = None, lag_mode="opt",
                   value: float = 0.5) -> PolicyParams:
    """All initial and transition parameters equal to ``value``.

    With ``order`` given, lag weights are ``1/k`` when optimized and
    harmonic when fixed.
    """
    lag = None
    mode = LagMode.parse(lag_mode)
    if order is not None:
        lag = (np.full(order, 1.0 / order) if mode is LagMode.OPTIMIZED
               else lag_weights_fixed_harmonic(order))
    return PolicyParams(np.full(mesh.num_vertices, value), np.full(mesh.num_arcs, value),
                        lag, mode)


def forced_start_params(mesh: NavMesh, start: int, order: int | None = None,
                        lag_mode="opt", value: float = 0.5) -> PolicyParams:
    """Like :func:`uniform_params` but with the start fixed at ``start``."""
    params = uniform_params(mesh, order, lag_mode, value)
    params.initial[:] = 0.0
    params.initial[start] = 1.0
    return params


class _Inclusion:
    """Categorical distribution over a group from Bernoulli parameters.

    Exact zeros disable an entry. A single exact one forces the whole mass
    onto that entry (the limit ``w -> inf``); derivatives are taken in that
    limit.
    """

    __slots__ = ("p", "w", "dw", "total", "forced", "probs", "enabled")

    def __init__(self, p):
        p = np.asarray(p, dtype=float)
        ones = np.flatnonzero(p == 1.0)
        if len(ones) > 1:
            raise DegenerateDistributionError("more than one parameter equals 1")
        self.forced = int(ones[0]) if len(ones) else None
        free = np.where((p > 0) & (p < 1), np.clip(p, CLAMP_EPS, 1 - CLAMP_EPS), p)
        if self.forced is not None:
            free[self.forced] = 0.0
        self.p = free
        self.w = free / (1.0 - free)
        self.dw = 1.0 / (1.0 - free) ** 2
        if self.forced is None:
            self.total = float(self.w.sum())
            if self.total <= 0:
                raise DegenerateDistributionError("all parameters are zero")
            self.probs = self.w / self.total
            self.enabled = p > 0
        else:
            self.total = math.inf
            self.probs = np.zeros_like(p)
            self.probs[self.forced] = 1.0
            self.enabled = self.probs > 0

    def _others(self, b: int) -> float:
        return float(self.w[:b].sum() + self.w[b + 1:].sum())

    def dlog(self, b: int) -> np.ndarray:
        """Gradient of ``log probs[b]`` with respect to the group parameters."""
        if self.forced is not None:
            if b != self.forced:
                raise SupportError("log-probability of a zero-probability entry")
            out = np.zeros_like(self.w)
            out[b] = self.w.sum()
            return out
        if not self.enabled[b]:
            raise SupportError("log-probability of a zero-probability entry")
        out = -self.dw / self.total
        out[b] = self.dw[b] * self._others(b) / (self.total * self.w[b])
        return out

    def jac_row(self, b: int) -> np.ndarray:
        """Gradient of ``probs[b]`` with respect to the group parameters."""
        if self.forced is not None:
            out = np.zeros_like(self.w)
            out[self.forced] = self.w.sum() if b == self.forced else -self.w[b]
            return out
        out = -self.probs[b] * self.dw / self.total
        out[b] = self._others(b) * self.dw[b] / self.total ** 2
        return out


@dataclass
class LogPmfGradient:
    d_initial: np.ndarray
    d_transition: np.ndarray
    d_lag: np.ndarray | None = None

    def to_vector(self) -> np.ndarray:
        parts = [self.d_initial, self.d_transition]
        if self.d_lag is not None:
            parts.append(self.d_lag)
        return np.concatenate(parts)


def initial_probabilities(params: PolicyParams) -> np.ndarray:
    """Start distribution ``pi_i = w_i / sum_j w_j``."""
    return _Inclusion(params.initial).probs.copy()


def transition_probabilities(mesh: NavMesh, params: PolicyParams, vertex: int):
    """One-step distribution out of ``vertex``.

    Returns
    -------
    neighbors : ndarray of int
        ``mesh.out_neighbors[vertex]``.
    probs : ndarray of float
        Probability of moving to each neighbor.
    """
    arcs = mesh.out_arcs(vertex)
    if not len(arcs):
        raise DeadEndError(vertex)
    group = _Inclusion(params.transition[arcs.start:arcs.stop])
    return np.array(mesh.out_neighbors[vertex], dtype=np.int64), group.probs.copy()


class PathDistribution:
    """Probability distribution over paths of a fixed length.

    Immutable after construction; all queries are pure.
    """

    def __init__(self, kind, mesh: NavMesh, params: PolicyParams, path_length: int,
                 order: int | None = None, reach: ReachabilityIndex | None = None):
        self.kind = kind = PolicyKind.parse(kind)
        self.mesh = mesh
        if order is None:
            order = params.order
        self.order = k = int(order)
        self.path_length = n = int(path_length)
        if k < 1:
            raise ConfigError("order must be >= 1")
        if n < 1:
            raise ConfigError("path length must be >= 1")
        if kind is PolicyKind.FIRST_ORDER:
            if k != 1:
                raise ConfigError("first-order policy requires order 1")
            if params.lag_weights is not None:
                raise ConfigError("first-order policy takes no lag weights")
        else:
            if params.lag_weights is None or len(params.lag_weights) != k:
                raise ConfigError(f"{kind.value} policy of order {k} needs {k} lag weights")
            if n <= k:
                raise ConfigError(f"path length {n} must exceed order {k}")
        params.validate(mesh)
        self.params = params
        self.lag_weights = None if params.lag_weights is None else params.lag_weights.copy()
        if kind is PolicyKind.GENERALIZED:
            if reach is None or reach.order < k:
                reach = build_reachability(mesh, k)
        self.reach = reach

        self._init = _Inclusion(params.initial)
        self._groups: list[_Inclusion | None] = []
        self._tprob = np.zeros(mesh.num_arcs)
        self._tenabled = np.zeros(mesh.num_arcs, dtype=bool)
        for v in range(mesh.num_vertices):
            arcs = mesh.out_arcs(v)
            if len(arcs):
                g = _Inclusion(params.transition[arcs.start:arcs.stop])
                self._tprob[arcs.start:arcs.stop] = g.probs
                self._tenabled[arcs.start:arcs.stop] = g.enabled
                self._groups.append(g)
            else:
                self._groups.append(None)
        self._step_cache: dict = {}
        self._cond_cache: dict = {}

    # -- elementary probabilities -------------------------------------------------

    @property
    def num_params(self) -> int:
        return self.params.size

    def initial_probabilities(self) -> np.ndarray:
        return self._init.probs.copy()

    def transition_probabilities(self, vertex: int):
        if self._groups[vertex] is None:
            raise DeadEndError(vertex)
        return (np.array(self.mesh.out_neighbors[vertex], dtype=np.int64),
                self._groups[vertex].probs.copy())

    def transition_prob(self, a: int, b: int) -> float:
        e = self.mesh.arc_index.get((a, b))
        return 0.0 if e is None else float(self._tprob[e])

    def _walk_prob(self, walk) -> float:
        prob = 1.0
        idx = self.mesh.arc_index
        for a, b in zip(walk[:-1], walk[1:]):
            prob *= self._tprob[idx[a, b]]
        return prob

    def _walk_enabled(self, walk) -> bool:
        idx = self.mesh.arc_index
        return all(self._tenabled[idx[a, b]] for a, b in zip(walk[:-1], walk[1:]))

    def step_prob(self, r: int, a: int, b: int) -> float:
        """Probability of reaching ``b`` from ``a`` as used by lag ``r``."""
        if self.kind is not PolicyKind.GENERALIZED or r == 1:
            return self.transition_prob(a, b)
        key = (r, a, b)
        val = self._step_cache.get(key)
        if val is None:
            walks = self.reach.walks(r, a).get(b, ())
            val = float(sum(self._walk_prob(w) for w in walks))
            self._step_cache[key] = val
        return val

    def step_matrix(self, r: int) -> np.ndarray:
        """Dense ``r``-step transition matrix used by lag ``r`` (for small meshes)."""
        n = self.mesh.num_vertices
        out = np.zeros((n, n))
        for a in range(n):
            if self.kind is PolicyKind.GENERALIZED:
                targets = self.reach.walks(r, a) if r <= self.reach.order else {}
            else:
                targets = self.mesh.out_neighbors[a]
            for b in targets:
                out[a, b] = self.step_prob(r, a, b)
        return out

    def _step_grad(self, r: int, a: int, b: int, out: np.ndarray, scale: float) -> None:
        """Add ``scale * d step_prob(r, a, b) / d transition`` into ``out``."""
        mesh = self.mesh
        if self.kind is not PolicyKind.GENERALIZED or r == 1:
            e = mesh.arc_index.get((a, b))
            if e is None:
                return
            start = mesh.indptr[a]
            out[start:start + len(mesh.out_neighbors[a])] += (
                scale * self._groups[a].jac_row(e - start))
            return
        for walk in self.reach.walks(r, a).get(b, ()):
            arcs = [mesh.arc_index[u, v] for u, v in zip(walk[:-1], walk[1:])]
            factors = self._tprob[arcs]
            for s, e in enumerate(arcs):
                rest = float(np.prod(np.delete(factors, s)))
                if rest == 0.0:
                    continue
                u = walk[s]
                start = mesh.indptr[u]
                out[start:start + len(mesh.out_neighbors[u])] += (
                    scale * rest * self._groups[u].jac_row(e - start))

    # -- path-level quantities ----------------------------------------------------

    def _check_path(self, path) -> tuple[int, ...]:
        path = tuple(int(v) for v in path)
        if len(path) != self.path_length:
            raise ConfigError(f"path has length {len(path)}, expected {self.path_length}")
        nv = self.mesh.num_vertices
        for v in path:
            if not 0 <= v < nv:
                raise ConfigError(f"vertex index {v} outside 0..{nv - 1}")
        return path

    def _mixture_terms(self, path, s):
        """Lag components ``P_i(path[s] | path[s - i])`` for ``i = 1..k``."""
        b = path[s]
        return np.array([self.step_prob(i, path[s - i], b) for i in range(1, self.order + 1)])

    def _is_mixture_step(self, s: int) -> bool:
        return self.kind is not PolicyKind.FIRST_ORDER and s >= self.order

    def log_pmf(self, path) -> float:
        path = self._check_path(path)
        p0 = self._init.probs[path[0]]
        if p0 <= 0:
            return LOG_ZERO
        logp = math.log(p0)
        for s in range(1, len(path)):
            if self._is_mixture_step(s):
                factor = float(self.lag_weights @ self._mixture_terms(path, s))
            else:
                factor = self.transition_prob(path[s - 1], path[s])
            if factor <= 0:
                return LOG_ZERO
            logp += math.log(factor)
        return logp

    def pmf(self, path) -> float:
        return math.exp(self.log_pmf(path))

    def grad_log_pmf(self, path) -> LogPmfGradient:
        path = self._check_path(path)
        if self.log_pmf(path) == LOG_ZERO:
            raise SupportError("gradient undefined for a path outside the support: "
                               + "-".join(str(v + 1) for v in path))
        mesh = self.mesh
        d_init = self._init.dlog(path[0])
        d_trans = np.zeros(mesh.num_arcs)
        d_lag = None if self.lag_weights is None else np.zeros(self.order)
        for s in range(1, len(path)):
            if self._is_mixture_step(s):
                terms = self._mixture_terms(path, s)
                denom = float(self.lag_weights @ terms)
                for i in range(1, self.order + 1):
                    lam = self.lag_weights[i - 1]
                    if lam != 0.0:
                        self._step_grad(i, path[s - i], path[s], d_trans, lam / denom)
                d_lag += terms / denom
            else:
                a, b = path[s - 1], path[s]
                start = mesh.indptr[a]
                e = mesh.arc_index[a, b]
                d_trans[start:start + len(mesh.out_neighbors[a])] += (
                    self._groups[a].dlog(e - start))
        if d_lag is not None and self.params.lag_mode is LagMode.FIXED:
            d_lag[:] = 0.0
        return LogPmfGradient(d_init, d_trans, d_lag)

    # -- conditionals used by sampling and enumeration ----------------------------

    def next_distribution(self, prefix, step: int | None = None):
        """Distribution of the next node given the path so far.

        Returns ``(candidates, probs)`` over the structurally admissible
        successors (every returned probability is positive).
        """
        s = len(prefix)
        mixture = self._is_mixture_step(s)
        window = tuple(prefix[s - self.order:s]) if mixture else (prefix[-1],)
        key = (mixture, window)
        hit = self._cond_cache.get(key)
        if hit is not None:
            return hit
        step = s + 1 if step is None else step
        last = window[-1]
        if self._groups[last] is None:
            raise DeadEndError(last, step)
        if not mixture:
            g = self._groups[last]
            nbrs = np.array(self.mesh.out_neighbors[last], dtype=np.int64)
            result = (nbrs[g.enabled], g.probs[g.enabled])
        else:
            acc: dict[int, float] = {}
            for i in range(1, self.order + 1):
                lam = float(self.lag_weights[i - 1])
                if lam <= 0:
                    continue
                src = window[-i]
                if self._groups[src] is None:
                    raise DeadEndError(src, step)
                for b in self._admissible(i, src):
                    acc[b] = acc.get(b, 0.0) + lam * self.step_prob(i, src, b)
            cands = np.array(sorted(acc), dtype=np.int64)
            probs = np.array([acc[b] for b in cands.tolist()])
            if probs.sum() < 1.0 - _MASS_TOL:
                # some lag source leaks mass through a dead end
                raise DeadEndError(last, step)
            result = (cands, probs)
        self._cond_cache[key] = result
        return result

    def _admissible(self, r: int, a: int):
        if self.kind is not PolicyKind.GENERALIZED or r == 1:
            g = self._groups[a]
            return [b for b, ok in zip(self.mesh.out_neighbors[a], g.enabled) if ok]
        return [b for b, walks in self.reach.walks(r, a).items()
                if any(self._walk_enabled(w) for w in walks)]

    def enumerate_support(self, cap: int = DEFAULT_SUPPORT_CAP):
        """All positive-probability paths with their probabilities.

        Depth-first with an explicit stack; output is lexicographic.
        """
        starts = np.flatnonzero(self._init.probs > 0)
        stack = [((int(v),), math.log(self._init.probs[v])) for v in starts[::-1]]
        out = []
        n = self.path_length
        while stack:
            prefix, logp = stack.pop()
            if len(prefix) == n:
                out.append((prefix, math.exp(logp)))
                if len(out) > cap:
                    raise CapExceededError(cap)
                continue
            cands, probs = self.next_distribution(prefix)
            for b, p in zip(cands[::-1].tolist(), probs[::-1].tolist()):
                stack.append((prefix + (b,), logp + math.log(p)))
        return out


def log_pmf(dist: PathDistribution, path) -> float:
    return dist.log_pmf(path)


def grad_log_pmf(dist: PathDistribution, path) -> LogPmfGradient:
    return dist.grad_log_pmf(path)


def enumerate_support(dist: PathDistribution, cap: int = DEFAULT_SUPPORT_CAP):
    return dist.enumerate_support(cap)


# -- serialization ---------------------------------------------------------------

def dump_params(params: PolicyParams, mesh: NavMesh) -> str:
    """JSON document with 1-based arc endpoints; floats keep full precision."""
    doc = {
        "initial": [float(x) for x in params.initial],
        "transitions": [{"from": i + 1, "to": j + 1, "value": float(params.transition[e])}
                        for e, (i, j) in enumerate(mesh.arcs)],
        "lag_mode": params.lag_mode.value,
    }
    if params.lag_weights is not None:
        doc["lag_weights"] = [float(x) for x in params.lag_weights]
    return json.dumps(doc, indent=1) + "\n"


def load_params(text: str, mesh: NavMesh) -> PolicyParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed parameter document: {exc}") from None
    if not isinstance(doc, dict) or "initial" not in doc:
        raise ConfigError("parameter document needs an 'initial' array")
    try:
        initial = np.array(doc["initial"], dtype=float)
        transition = np.full(mesh.num_arcs, np.nan)
        for entry in doc.get("transitions", []):
            arc = (int(entry["from"]) - 1, int(entry["to"]) - 1)
            e = mesh.arc_index.get(arc)
            if e is None:
                raise ConfigError(f"transition v{arc[0] + 1}->v{arc[1] + 1} is not a mesh arc")
            if not np.isnan(transition[e]):
                raise ConfigError(f"duplicate transition v{arc[0] + 1}->v{arc[1] + 1}")
            transition[e] = float(entry["value"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed parameter document: {exc}") from None
    missing = np.flatnonzero(np.isnan(transition))
    if missing.size:
        i, j = mesh.arcs[missing[0]]
        raise ConfigError(f"missing transition parameter for arc v{i + 1}->v{j + 1}")
    lag = doc.get("lag_weights")
    params = PolicyParams(initial, transition, None if lag is None else lag,
                          doc.get("lag_mode", "opt"))
    params.validate(mesh)
    return params


def params_from_dense(mesh: NavMesh, initial: Sequence[float], dense, lag_weights=None,
                      lag_mode="opt") -> PolicyParams:
    """Build parameters from an ``N x N`` transition table (entries off-arc ignored)."""
    dense = np.asarray(dense, dtype=float)
    transition = np.array([dense[i, j] for i, j in mesh.arcs])
    return PolicyParams(np.asarray(initial, dtype=float), transition, lag_weights, lag_mode)
