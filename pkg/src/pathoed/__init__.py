"""Optimal experimental design of sensor paths on navigation meshes.

Paths are drawn from parametric Markov policies whose parameters are tuned
by projected stochastic gradient steps on a black-box utility.
"""

from .errors import (BaselineUndefinedError, CapExceededError, ConfigError, DeadEndError,
                     DegenerateDistributionError, EvaluationError, MeshError, NumericalError,
                     PathOEDError, SupportError)
from .navmesh import (NavMesh, ReachabilityIndex, build_grid_mesh, build_reachability,
                      load_mesh, serialize_mesh)
from .optimizer import (OptimizationAborted, OptimizationResult, OptimizerConfig,
                        OptimizerTrace, optimal_baseline, run, scaling_projector,
                        stochastic_gradient)
from .oracle import (BruteForceResult, count_feasible_paths, enumerate_feasible_paths,
                     exact_expectation, exact_gradient, global_optimum)
from .policy import (LagMode, PathDistribution, PolicyKind, PolicyParams, dump_params,
                     enumerate_support, forced_start_params, grad_log_pmf, lag_weights_fixed_harmonic,
                     load_params, log_pmf, uniform_params)
from .sampler import sample_array, sample_paths
from .utilities import format_path, load_utility_table, parse_path

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
