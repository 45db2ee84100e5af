"""Linear-Gaussian inverse problem whose observations follow a sensor path.

The state ``x`` (one entry per spatial gridpoint) evolves by a fixed linear
propagator ``A`` per model step ``dt``. A single sensor moving along a path
``z = (z_1, ..., z_n)`` observes the state at gridpoint ``z_t`` at time
``t * f * dt``, so the forward operator has rows ``e_{z_t}^T A^{t f}``.
With a Gaussian prior and independent Gaussian noise the posterior is
Gaussian with covariance ``(F^T R^{-1} F + C^{-1})^{-1}``; its
log-determinant (D), trace (A) or largest eigenvalue (E) is the utility to
minimize.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, NumericalError
from .navmesh import NavMesh, build_grid_mesh

__all__ = [
    "CRITERIA",
    "BayesUtility",
    "DEFAULT_INSTANCE",
    "LinearGaussianModel",
    "PosteriorSummary",
    "build_desk_instance",
    "largest_eigenvalue",
    "load_instance_spec",
    "observation_operator",
    "posterior_covariance",
    "utility",
]

CRITERIA = ("D", "A", "E")


@dataclass(eq=False)
class LinearGaussianModel:
    """Discrete linear dynamics with Gaussian prior and diagonal noise.

    ``noise_variances[v, t - 1]`` is the noise variance of an observation
    taken at vertex ``v`` at observation index ``t``; its column count is the
    longest supported path.
    """

    propagator: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_variances: np.ndarray
    vertex_to_state_index: np.ndarray
    obs_frequency: int = 1
    dt: float = 1.0
    _chol: np.ndarray = field(init=False, repr=False)
    _powers: list = field(init=False, repr=False)

    def __post_init__(self):
        self.propagator = np.asarray(self.propagator, dtype=float)
        self.prior_mean = np.asarray(self.prior_mean, dtype=float)
        self.prior_cov = np.asarray(self.prior_cov, dtype=float)
        self.noise_variances = np.atleast_2d(np.asarray(self.noise_variances, dtype=float))
        self.vertex_to_state_index = np.asarray(self.vertex_to_state_index, dtype=np.int64)
        m = self.state_dim
        if self.propagator.shape != (m, m) or self.prior_cov.shape != (m, m):
            raise ConfigError("propagator and prior covariance must be state_dim x state_dim")
        if np.any((self.vertex_to_state_index < 0) | (self.vertex_to_state_index >= m)):
            raise ConfigError("vertex_to_state_index entries must lie in [0, state_dim)")
        if self.noise_variances.shape[0] != len(self.vertex_to_state_index):
            raise ConfigError("noise_variances needs one row per mesh vertex")
        if not np.all(self.noise_variances > 0):
            raise ConfigError("noise variances must be strictly positive")
        if int(self.obs_frequency) < 1 or not self.dt > 0:
            raise ConfigError("obs_frequency must be a positive integer and dt positive")
        self.obs_frequency = int(self.obs_frequency)
        if np.max(np.abs(self.prior_cov - self.prior_cov.T)) > 1e-10:
            raise ConfigError("prior covariance is not symmetric")
        try:
            self._chol = linalg.cholesky(self.prior_cov, lower=True)
        except linalg.LinAlgError:
            raise NumericalError("prior covariance is not positive definite") from None
        step = np.linalg.matrix_power(self.propagator, self.obs_frequency)
        powers = [step]
        for _ in range(1, self.max_observations):
            powers.append(powers[-1] @ step)
        self._powers = powers

    @property
    def state_dim(self) -> int:
        return len(self.prior_mean)

    @property
    def max_observations(self) -> int:
        return self.noise_variances.shape[1]

    def noise_variance(self, vertex: int, t: int) -> float:
        """Noise variance at ``vertex`` for observation index ``t`` (1-based)."""
        return float(self.noise_variances[vertex, t - 1])

    def observation_time(self, t: int) -> float:
        return t * self.obs_frequency * self.dt


@dataclass
class PosteriorSummary:
    posterior_cov: np.ndarray
    posterior_mean: np.ndarray | None = None
    logdet: float | None = None


def _check_path(model: LinearGaussianModel, path) -> tuple[int, ...]:
    path = tuple(int(v) for v in path)
    if not 1 <= len(path) <= model.max_observations:
        raise ConfigError(f"path length {len(path)} outside 1..{model.max_observations}")
    nv = len(model.vertex_to_state_index)
    for v in path:
        if not 0 <= v < nv:
            raise ConfigError(f"vertex v{v + 1} has no state index")
    return path


def observation_operator(model: LinearGaussianModel, path) -> np.ndarray:
    """``n x m`` matrix whose row ``t`` observes gridpoint ``z_t`` at time ``t f dt``."""
    path = _check_path(model, path)
    idx = model.vertex_to_state_index
    return np.vstack([model._powers[t][idx[v]] for t, v in enumerate(path)])


def _factor(model: LinearGaussianModel, path):
    """Return ``(B, logdet)`` with ``posterior_cov = B^T B``.

    With prior ``C = L L^T`` the posterior is ``L (I + G^T R^{-1} G)^{-1} L^T``
    for ``G = F L``; factoring the middle matrix as ``K K^T`` gives
    ``B = K^{-1} L^T``.
    """
    F = observation_operator(model, path)
    r = np.array([model.noise_variance(v, t + 1) for t, v in enumerate(path)])
    L = model._chol
    G = (F @ L) / np.sqrt(r)[:, None]
    M = G.T @ G
    M[np.diag_indices_from(M)] += 1.0
    try:
        K = linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        raise NumericalError("posterior precision factorization failed") from None
    B = linalg.solve_triangular(K, L.T, lower=True)
    logdet = 2.0 * (np.sum(np.log(np.diag(L))) - np.sum(np.log(np.diag(K))))
    return B, logdet, F, r


def posterior_covariance(model: LinearGaussianModel, path, data=None) -> PosteriorSummary:
    """Posterior covariance for the design ``path``; the mean too if ``data`` is given."""
    path = _check_path(model, path)
    B, logdet, F, r = _factor(model, path)
    cov = B.T @ B
    mean = None
    if data is not None:
        data = np.asarray(data, dtype=float)
        if data.shape != (len(path),):
            raise ConfigError(f"data must have shape ({len(path)},)")
        rhs = linalg.cho_solve((model._chol, True), model.prior_mean) + F.T @ (data / r)
        mean = cov @ rhs
    return PosteriorSummary(cov, mean, logdet)


def largest_eigenvalue(sym: np.ndarray, method: str = "eigh", tol: float = 1e-8,
                       max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite matrix."""
    if method == "eigh":
        return float(linalg.eigvalsh(sym)[-1])
    if method != "power":
        raise ConfigError(f"unknown eigenvalue method {method!r}")
    v = np.ones(len(sym)) / math.sqrt(len(sym))
    lam = 0.0
    for _ in range(max_iter):
        w = sym @ v
        new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    raise NumericalError("power iteration did not converge")


def utility(model: LinearGaussianModel, path, criterion: str = "D") -> float:
    """D: log-determinant, A: trace, E: largest eigenvalue of the posterior covariance."""
    path = _check_path(model, path)
    B, logdet, _, _ = _factor(model, path)
    if criterion == "D":
        return float(logdet)
    if criterion == "A":
        return float(np.sum(B * B))
    if criterion == "E":
        return largest_eigenvalue(B.T @ B)
    raise ConfigError(f"unknown criterion {criterion!r}; expected one of D, A, E")


class BayesUtility:
    """Callable black-box utility for a fixed model and criterion."""

    def __init__(self, model: LinearGaussianModel, criterion: str = "D"):
        if criterion not in CRITERIA:
            raise ConfigError(f"unknown criterion {criterion!r}; expected one of D, A, E")
        self.model = model
        self.criterion = criterion

    def __call__(self, path) -> float:
        return utility(self.model, path, self.criterion)


# -- desk-scale instances ---------------------------------------------------------

DEFAULT_INSTANCE = {
    "rows": 3,
    "cols": 3,
    "holes": [[1, 1, 1, 1]],
    "diffusion": 0.2,
    "dt": 1.0,
    "obs_frequency": 1,
    "path_length": 4,
    "prior_variance": 1.0,
    "prior_length_scale": 0.4,
    "prior_nugget": 1e-8,
    "noise_fraction": 0.05,
    "reference_center": [0.25, 0.75],
    "reference_width": 0.3,
    "reference_offset": 0.1,
}


def load_instance_spec(text: str) -> dict:
    """Parse a JSON instance document, filling defaults for absent fields."""
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed instance spec: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("instance spec must be a JSON object")
    unknown = set(doc) - set(DEFAULT_INSTANCE)
    if unknown:
        raise ConfigError(f"unknown instance fields: {', '.join(sorted(unknown))}")
    spec = dict(DEFAULT_INSTANCE)
    spec.update(doc)
    return spec


def _grid_laplacian(rows: int, cols: int) -> np.ndarray:
    m = rows * cols
    lap = np.zeros((m, m))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    lap[i, rr * cols + cc] += 1.0
                    lap[i, i] -= 1.0
    return lap


def build_desk_instance(spec: dict | None = None) -> tuple[NavMesh, LinearGaussianModel]:
    """Grid navigation mesh with a matched diffusion / squared-exponential model.

    The state lives on every gridpoint of the ``rows x cols`` grid (holes
    included: they only block navigation). One explicit diffusion step is
    ``I + diffusion * dt * Laplacian`` with zero-flux boundaries. Noise
    variances are ``noise_fraction`` times the largest absolute value of a
    reference field (an offset Gaussian bump evolved over the observation
    window) at each gridpoint.
    """
    spec = load_instance_spec(json.dumps(spec or {}))
    try:
        rows, cols = int(spec["rows"]), int(spec["cols"])
        n = int(spec["path_length"])
        f = int(spec["obs_frequency"])
        dt = float(spec["dt"])
        kappa = float(spec["diffusion"])
        var = float(spec["prior_variance"])
        ell = float(spec["prior_length_scale"])
        nugget = float(spec["prior_nugget"])
        frac = float(spec["noise_fraction"])
        center = np.asarray(spec["reference_center"], dtype=float)
        width = float(spec["reference_width"])
        offset = float(spec["reference_offset"])
        holes = [tuple(h) for h in spec["holes"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid instance field: {exc}") from None
    if n < 1 or f < 1 or dt <= 0 or kappa < 0 or var <= 0 or ell <= 0 or nugget < 0:
        raise ConfigError("instance fields out of range")
    if frac <= 0 or width <= 0 or center.shape != (2,):
        raise ConfigError("instance fields out of range")
    alpha = kappa * dt
    if alpha * 4 > 1:
        raise ConfigError(f"diffusion * dt = {alpha} exceeds the explicit stability limit 0.25")

    mesh = build_grid_mesh(rows, cols, holes)
    m = rows * cols
    propagator = np.eye(m) + alpha * _grid_laplacian(rows, cols)

    xs = np.linspace(0, 1, cols) if cols > 1 else np.array([0.5])
    ys = np.linspace(0, 1, rows) if rows > 1 else np.array([0.5])
    coords = np.array([(xs[c], ys[r]) for r in range(rows) for c in range(cols)])
    sq = np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=-1)
    prior_cov = var * np.exp(-0.5 * sq / ell ** 2) + nugget * var * np.eye(m)

    state = offset + np.exp(-0.5 * np.sum((coords - center) ** 2, axis=1) / width ** 2)
    peak = np.abs(state).copy()
    for _ in range(n * f):
        state = propagator @ state
        peak = np.maximum(peak, np.abs(state))
    v2s = np.array([r * cols + c for r, c in mesh.grid_cells], dtype=np.int64)
    noise = np.repeat((frac * peak[v2s])[:, None], n, axis=1)

    model = LinearGaussianModel(propagator, np.zeros(m), prior_cov, noise, v2s,
                                obs_frequency=f, dt=dt)
    return mesh, model
