"""Command-line front end: ``pathoed {sample,optimize,bruteforce,gradcheck}``.

Exit codes: 0 ok, 1 failed check, 2 usage or configuration error,
3 runtime error, 4 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bayes, diagnostics, oracle
from .errors import CapExceededError, ConfigError, MeshError, PathOEDError
from .navmesh import build_grid_mesh, build_reachability, load_mesh
from .optimizer import OptimizationAborted, OptimizerConfig, run
from .policy import (DEFAULT_SUPPORT_CAP, PathDistribution, PolicyKind, dump_params,
                     load_params, uniform_params)
from .sampler import sample_paths
from .utilities import CachedUtility, format_path, load_utility_table

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CAP = 0, 1, 2, 3, 4

log = logging.getLogger("pathoed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- argument groups ------------------------------------------------------------------

def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_argument_group("problem")
    src.add_argument("--mesh", type=Path, help="edge-list file (1-based vertices)")
    src.add_argument("--grid", help="grid mesh as ROWSxCOLS, e.g. 3x3")
    src.add_argument("--hole", action="append", default=[], metavar="R0,C0,R1,C1",
                     help="0-based inclusive cell rectangle removed from --grid (repeatable)")
    src.add_argument("--instance", type=Path,
                     help="JSON desk Bayesian instance (mesh, model and default length)")
    src.add_argument("--criterion", choices=bayes.CRITERIA,
                     help="Bayesian design criterion; uses --instance or the default instance")
    src.add_argument("--utility-table", type=Path, help="CSV of path,utility rows")
    src.add_argument("--length", type=int, help="path length n (number of vertices)")
    pol = p.add_argument_group("policy")
    pol.add_argument("--policy", type=Path, help="JSON policy parameters (default: all 0.5)")
    pol.add_argument("--kind", default="first", help="first | higher | generalized")
    pol.add_argument("--order", type=int, help="history order k (default 1, or 2 for higher kinds)")
    pol.add_argument("--lag-mode", default="opt", choices=("opt", "fixed"))
    misc = p.add_argument_group("execution")
    misc.add_argument("--seed", type=int, default=0)
    misc.add_argument("--threads", type=int, default=1)
    misc.add_argument("--out-dir", type=Path, default=Path("."))
    misc.add_argument("--cap", type=int, default=DEFAULT_SUPPORT_CAP,
                      help="maximum number of enumerated paths")
    misc.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathoed", description="Path optimal experimental design on "
                     "navigation meshes via stochastic policy optimization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw paths from a policy")
    _add_problem_args(p)
    p.add_argument("--samples", type=int, default=10)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("optimize", help="optimize a policy for a utility")
    _add_problem_args(p)
    p.add_argument("--mode", choices=("minimize", "maximize"), default="minimize")
    p.add_argument("--samples", type=int, default=32, help="paths per iteration (N_ens)")
    p.add_argument("--batches", type=int, default=1, help="baseline batches N_b (0 disables)")
    p.add_argument("--independent-baseline", action="store_true",
                   help="draw baseline batches independently of the gradient sample")
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--schedule", choices=("constant", "sqrt"), default="constant")
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--final-samples", type=int, default=32, help="paths drawn from the optimum")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bruteforce", help="evaluate every feasible path")
    _add_problem_args(p)
    p.add_argument("--mode", choices=("minimize", "maximize"), default="minimize")
    p.set_defaults(func=cmd_bruteforce)

    p = sub.add_parser("gradcheck", help="check policy gradients and estimators")
    _add_problem_args(p)
    p.add_argument("--fd-step", type=float, default=1e-6)
    p.add_argument("--fd-tol", type=float, default=1e-5)
    p.add_argument("--score-tol", type=float, default=1e-8)
    p.add_argument("--max-paths", type=int, default=200,
                   help="finite-difference paths (support prefix, or samples if larger)")
    p.add_argument("--replicas", type=int, default=64)
    p.add_argument("--samples", type=int, default=32)
    p.set_defaults(func=cmd_gradcheck)
    return parser


# -- problem assembly -----------------------------------------------------------------

def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--grid expects ROWSxCOLS, got {text!r}") from None
    return rows, cols


def _parse_hole(text: str) -> tuple[int, int, int, int]:
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != 4:
        raise UsageError(f"--hole expects R0,C0,R1,C1, got {text!r}")
    return vals


class Problem:
    """Mesh, policy distribution and (optional) utility assembled from flags."""

    def __init__(self, args):
        sources = [x for x in ("mesh", "grid", "instance") if getattr(args, x)]
        if len(sources) > 1:
            raise UsageError("use only one of --mesh, --grid, --instance")
        if args.utility_table and args.criterion:
            raise UsageError("use either --criterion or --utility-table, not both")
        if args.criterion and (args.mesh or args.grid):
            raise UsageError("--criterion needs a Bayesian instance, not --mesh or --grid")
        self.model = None
        length = args.length
        if args.mesh:
            self.mesh = load_mesh(_read(args.mesh))
        elif args.grid:
            rows, cols = _parse_grid(args.grid)
            self.mesh = build_grid_mesh(rows, cols, [_parse_hole(h) for h in args.hole])
        elif args.instance or args.criterion:
            spec = bayes.load_instance_spec(_read(args.instance) if args.instance else "")
            self.mesh, self.model = bayes.build_desk_instance(spec)
            length = length or int(spec["path_length"])
        else:
            raise UsageError("a mesh is required: --mesh, --grid, --instance or --criterion")
        if args.hole and not args.grid:
            raise UsageError("--hole only applies to --grid")
        if length is None:
            raise UsageError("--length is required")
        self.length = length
        self.utility = None
        if args.utility_table:
            self.utility = load_utility_table(_read(args.utility_table))
        elif args.criterion or self.model is not None:
            self.utility = bayes.BayesUtility(self.model, args.criterion or "D")
        self.kind = PolicyKind.parse(args.kind)
        order = args.order
        if order is None:
            order = 1 if self.kind is PolicyKind.FIRST_ORDER else 2
        if args.policy:
            params = load_params(_read(args.policy), self.mesh)
        else:
            params = uniform_params(self.mesh, None if self.kind is PolicyKind.FIRST_ORDER
                                    else order, args.lag_mode)
        reach = build_reachability(self.mesh, order) if self.kind is PolicyKind.GENERALIZED else None
        self.dist = PathDistribution(self.kind, self.mesh, params, length, order, reach)

    def require_utility(self):
        if self.utility is None:
            raise UsageError("a utility is required: --criterion, --instance or --utility-table")
        return self.utility


def _out(args, name: str) -> Path:
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create {args.out_dir}: {exc.strerror}") from None
    return args.out_dir / name


# -- commands -------------------------------------------------------------------------

def cmd_sample(args) -> int:
    prob = Problem(args)
    if args.samples < 0:
        raise UsageError("--samples must be >= 0")
    paths = sample_paths(prob.dist, args.samples, args.seed) if args.samples else []
    lines = [f"{format_path(p)} {prob.dist.log_pmf(p):.17g}\n" for p in paths]
    _out(args, "paths.txt").write_text("".join(lines))
    return EXIT_OK


def _result_doc(result, prob, args, trace_name, params_name) -> dict:
    return {
        "best_path": format_path(result.best_path),
        "best_utility": result.best_utility,
        "mode": args.mode,
        "iterations": len(result.trace),
        "converged": result.converged,
        "kind": prob.kind.value,
        "order": prob.dist.order,
        "path_length": prob.length,
        "seed": args.seed,
        "params_file": params_name,
        "trace_file": trace_name,
        "final_sample": [{"path": format_path(p), "utility": u} for p, u in result.final_sample],
    }


def cmd_optimize(args) -> int:
    prob = Problem(args)
    utility = CachedUtility(prob.require_utility())
    config = OptimizerConfig(mode=args.mode, sample_size=args.samples,
                             baseline_batches=args.batches,
                             baseline_same_sample=not args.independent_baseline,
                             step_size=args.step, schedule=args.schedule,
                             max_iterations=args.max_iters, update_norm_tol=args.tol,
                             final_sample_size=args.final_samples, seed=args.seed,
                             threads=args.threads)
    config.validate()
    trace_path = _out(args, "trace.csv")
    try:
        result = run(prob.dist, utility, config)
    except OptimizationAborted as exc:
        trace_path.write_text(exc.trace.to_csv())
        _out(args, "params.json").write_text(dump_params(exc.params, prob.mesh))
        raise
    trace_path.write_text(result.trace.to_csv())
    _out(args, "params.json").write_text(dump_params(result.optimal_params, prob.mesh))
    doc = _result_doc(result, prob, args, "trace.csv", "params.json")
    _out(args, "result.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(f"best path {doc['best_path']} utility {result.best_utility:.17g} "
          f"after {len(result.trace)} iterations")
    return EXIT_OK


def cmd_bruteforce(args) -> int:
    prob = Problem(args)
    utility = prob.require_utility()
    result = oracle.global_optimum(prob.mesh, prob.length, utility, args.mode, args.cap,
                                   args.threads)
    _out(args, "bruteforce.csv").write_text(oracle.write_bruteforce_csv(result))
    print(f"best path {format_path(result.best_path)} utility {result.best_value:.17g} "
          f"of {len(result.paths)} feasible paths")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    prob = Problem(args)
    dist = prob.dist
    checks = []
    try:
        support = dist.enumerate_support(args.cap)
    except CapExceededError:
        support = None
    if support is not None and len(support) <= args.max_paths:
        paths = [p for p, _ in support]
    else:
        paths = sample_paths(dist, args.max_paths, args.seed)
    fd_err = max((diagnostics.finite_difference_error(dist, p, args.fd_step) for p in paths),
                 default=0.0)
    checks.append(diagnostics.CheckResult("finite differences (max rel err)",
                                          fd_err < args.fd_tol, fd_err, args.fd_tol))
    if support is not None:
        res = diagnostics.score_identity_residual(dist, args.cap)
        checks.append(diagnostics.CheckResult("score identity (inf-norm)",
                                              res < args.score_tol, res, args.score_tol))
    else:
        print("SKIP score identity: support exceeds --cap")
    if prob.utility is not None:
        raw, based = diagnostics.estimator_replicas(dist, CachedUtility(prob.utility),
                                                    args.replicas, args.samples, args.seed)
        v_raw = float(raw.var(axis=0, ddof=1).sum())
        v_base = float(based.var(axis=0, ddof=1).sum())
        checks.append(diagnostics.CheckResult("baseline variance ratio", v_base < v_raw,
                                              v_base / v_raw if v_raw > 0 else 0.0, 1.0))
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


# -- entry point ----------------------------------------------------------------------

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"pathoed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pathoed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapExceededError as exc:
        print(f"pathoed: {exc}", file=sys.stderr)
        return EXIT_CAP
    except OptimizationAborted as exc:
        print(f"pathoed: {exc} (partial trace written)", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc.cause, ConfigError) else EXIT_RUNTIME
    except (ConfigError, MeshError) as exc:
        print(f"pathoed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PathOEDError as exc:
        print(f"pathoed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
