"""Command-line front end.

Subcommands: generate, solve, path, sweep, image-demo.  Every command
validates its settings before computing and writes its output files only
after all computation succeeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import DomainError, ErfSmoothError
from .io import read_matrix, read_vector, write_matrix, write_records, write_trace, write_vector
from .kernels import SmoothingKind
from .line_search import LineSearchConfig, LineSearchMethod
from .objectives import ProblemData
from .problems import (
    MatrixKind,
    NoiseTarget,
    PathSolver,
    Sandwich,
    default_iters,
    image_demo,
    make_problem,
    phantom,
    run_path,
    sweep_contours,
    tau_grid,
)
from .solvers import SolverConfig, Threshold, fista, ista, newton, nonlinear_cg, steepest_descent

log = logging.getLogger("erfsmooth")

DEFAULT_NNZ_FRACTIONS = "0.01,0.02,0.05,0.1,0.2,0.3"
DEFAULT_NOISE_GRID = "0,0.05,0.1,0.2,0.3,0.5"


class UsageError(ErfSmoothError, ValueError):
    pass


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _solver_list(text):
    try:
        return [PathSolver(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_problem_args(p, with_files=True):
    g = p.add_argument_group("problem")
    if with_files:
        g.add_argument("--A", dest="A_path", metavar="FILE", help="matrix file (MatrixMarket); overrides the generator")
        g.add_argument("--b", dest="b_path", metavar="FILE", help="right-hand side file, required with --A")
        g.add_argument("--x", dest="x_path", metavar="FILE", help="ground-truth signal file")
    g.add_argument("--matrix-kind", choices=["I", "II", "III"], default="I", help="generated matrix family")
    g.add_argument("--m", type=int, default=200, help="rows")
    g.add_argument("--n", type=int, default=200, help="columns")
    g.add_argument("--nnz", type=int, default=20, help="nonzeros in the generated signal")
    g.add_argument("--noise", type=float, default=0.1, help="relative noise level")
    g.add_argument("--noise-target", choices=[t.value for t in NoiseTarget], default="rhs",
                   help="add noise to b (scaled by ||Ax||) or to x (scaled by ||x||)")
    g.add_argument("--seed", type=int, default=0, help="master random seed")


def _add_solver_args(p, solver=True, path=True):
    g = p.add_argument_group("solver")
    if solver:
        g.add_argument("--solver", choices=[s.value for s in PathSolver], default="cg", help="algorithm")
    g.add_argument("--p", type=float, default=1.0, help="exponent of the lp penalty, in (0, 1]")
    g.add_argument("--kind", choices=[k.value for k in SmoothingKind], default="conv-phi", help="smoothing of |t|")
    g.add_argument("--sigma0", type=float, default=None,
                   help="initial smoothing width (default: 0.1*max(1,||x0||_inf) cold, 1e-3*max(1,||x0||_inf) warm)")
    g.add_argument("--alpha", type=float, default=0.8, help="sigma annealing factor")
    g.add_argument("--iters", type=int, default=None, help="iterations per tau (default: 50, or 100 for ista/fista)")
    g.add_argument("--line-search", choices=["auto"] + [m.value for m in LineSearchMethod], default="auto",
                   help="step rule (auto: taylor for p=1, secant for p<1)")
    g.add_argument("--threshold", choices=[t.value for t in Threshold], default="soft", help="sparsity step")
    g.add_argument("--newton-inner", type=int, default=15, help="inner CG iterations per Newton step")
    if path:
        g.add_argument("--tau-points", type=int, default=30, help="number of tau grid points")
        g.add_argument("--tau-start-div", type=float, default=10.0, help="first tau = ||A^T b||_inf / this")
        g.add_argument("--tau-end-div", type=float, default=5e8, help="last tau = ||A^T b||_inf / this")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="erfsmooth", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random problem (A.mtx, x.mtx, b.mtx)", formatter_class=fmt)
    _add_problem_args(p, with_files=False)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("solve", help="single-tau solve, writes solution.mtx and trace.csv", formatter_class=fmt)
    _add_problem_args(p)
    _add_solver_args(p, path=False)
    p.add_argument("--tau", type=float, default=None, help="regularisation weight (default: ||A^T b||_inf / --tau-start-div)")
    p.add_argument("--tau-start-div", type=float, default=10.0, help="divisor used when --tau is absent")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("path", help="warm-started regularisation path, writes path.csv", formatter_class=fmt)
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="min-over-tau percent-error table, writes sweep.csv", formatter_class=fmt)
    _add_problem_args(p, with_files=False)
    _add_solver_args(p, solver=False)
    p.add_argument("--solvers", type=_solver_list, default="cg,fista", help="comma-separated solvers")
    p.add_argument("--nnz-fractions", type=_float_list, default=DEFAULT_NNZ_FRACTIONS,
                   help="nonzero counts as fractions of n")
    p.add_argument("--nnz-grid", type=_float_list, default=None, help="explicit nonzero counts (overrides --nnz-fractions)")
    p.add_argument("--noise-grid", type=_float_list, default=DEFAULT_NOISE_GRID, help="noise fractions")
    p.add_argument("--trials", type=int, default=10, help="trials per cell")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("image-demo", help="recover a sparse image with four methods, writes image_demo.csv",
                       formatter_class=fmt)
    p.add_argument("--image", default=None, help="image as a MatrixMarket matrix (default: built-in 21x25 phantom)")
    p.add_argument("--matrix-kind", choices=["I", "II", "III"], default="II", help="matrix family")
    p.add_argument("--m", type=int, default=500, help="rows of the measurement matrix")
    p.add_argument("--noise", type=float, default=0.25, help="noise level relative to ||x||, added to x")
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--trials", type=int, default=1, help="independent trials (seeds seed, seed+1, ...)")
    _add_solver_args(p, solver=False)
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _solver_config(args, tau=1.0, solver=None) -> SolverConfig:
    if args.line_search == "auto":
        ls = None
    else:
        ls = LineSearchConfig(method=LineSearchMethod(args.line_search))
    iters = args.iters
    if iters is None:
        iters = default_iters(solver) if solver is not None else 50
    return SolverConfig(
        tau=tau,
        p=args.p,
        sigma0=args.sigma0,
        alpha=args.alpha,
        max_iters=iters,
        kind=SmoothingKind(args.kind),
        line_search=ls,
        threshold=Threshold(args.threshold),
        newton_inner_iters=args.newton_inner,
    )


def _validate_problem_args(args):
    if args.m < 2 or args.n < 2:
        raise UsageError("--m and --n must be at least 2")
    if not 1 <= args.nnz <= args.n:
        raise UsageError("--nnz must lie in [1, n]")
    if not args.noise >= 0.0:
        raise UsageError("--noise must be non-negative")


def _validate_grid_args(args):
    if args.tau_points < 2:
        raise UsageError("--tau-points must be at least 2")
    if not 0.0 < args.tau_start_div < args.tau_end_div:
        raise UsageError("need 0 < --tau-start-div < --tau-end-div")


def _load_problem(args) -> ProblemData:
    if getattr(args, "A_path", None):
        if not args.b_path:
            raise UsageError("--A requires --b")
        A = read_matrix(args.A_path)
        b = read_vector(args.b_path)
        x = read_vector(args.x_path) if args.x_path else None
        return ProblemData(A, b, x)
    _validate_problem_args(args)
    return make_problem(MatrixKind.parse(args.matrix_kind), args.m, args.n, args.nnz, args.noise, args.seed,
                        NoiseTarget(args.noise_target))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args):
    _validate_problem_args(args)
    prob = _load_problem(args)
    out = _out_dir(args)
    write_matrix(out / "A.mtx", prob.A)
    write_vector(out / "x.mtx", prob.truth)
    write_vector(out / "b.mtx", prob.b)


def _proximal_trace(prob, tau, iters, method):
    rows = []

    def cb(k, x):
        r = prob.A @ x - prob.b
        rr = float(r @ r)
        rows.append({"iteration": k, "f1_value": rr + 2.0 * tau * float(np.abs(x).sum()),
                     "residual_norm": float(np.sqrt(rr)), "nonzeros": int(np.count_nonzero(x))})

    x = method(prob, tau, iters, np.zeros(prob.n), callback=cb)
    return x, rows


def cmd_solve(args):
    solver = PathSolver(args.solver)
    _solver_config(args, solver=solver)
    if args.tau is not None and not args.tau > 0.0:
        raise UsageError("--tau must be positive")
    if not args.tau_start_div > 0.0:
        raise UsageError("--tau-start-div must be positive")
    prob = _load_problem(args)
    tau = args.tau if args.tau is not None else prob.tau_max / args.tau_start_div
    cfg = _solver_config(args, tau=tau, solver=solver)
    x0 = np.zeros(prob.n)
    if solver in (PathSolver.ISTA, PathSolver.FISTA):
        x, rows = _proximal_trace(prob, tau, cfg.max_iters, ista if solver is PathSolver.ISTA else fista)
    elif solver is PathSolver.CG_NEWTON_SANDWICH:
        sw = Sandwich()
        x, rows = x0, []
        sigma0 = cfg.initial_sigma(x0)
        for stage, iters in ((nonlinear_cg, sw.cg_before), (newton, sw.newton), (nonlinear_cg, sw.cg_after)):
            x, tr = stage(prob, cfg.replace(sigma0=sigma0, max_iters=iters), x)
            rows += [dataclasses.replace(r, iteration=len(rows) + i) for i, r in enumerate(tr)]
            if len(tr):
                sigma0 = max(tr.last_sigma * cfg.alpha, 1e-12)
    else:
        x, rows = (steepest_descent if solver is PathSolver.SD else nonlinear_cg)(prob, cfg, x0)
    out = _out_dir(args)
    write_vector(out / "solution.mtx", x, comment=f"tau = {tau!r}")
    write_trace(rows, out / "trace.csv")


def cmd_path(args):
    solver = PathSolver(args.solver)
    _solver_config(args, solver=solver)
    _validate_grid_args(args)
    prob = _load_problem(args)
    grid = tau_grid(prob, args.tau_points, args.tau_start_div, args.tau_end_div)
    records = run_path(prob, solver, _solver_config(args, solver=solver), grid)
    out = _out_dir(args)
    write_records(records, out / "path.csv")


def cmd_sweep(args):
    solvers = args.solvers if isinstance(args.solvers, list) else _solver_list(args.solvers)
    cfg = _solver_config(args)
    _validate_grid_args(args)
    _validate_problem_args(args)
    if args.trials < 1 or args.workers < 1:
        raise UsageError("--trials and --workers must be at least 1")
    if args.nnz_grid is not None:
        nnz_grid = [int(round(v)) for v in args.nnz_grid]
    else:
        fracs = args.nnz_fractions if isinstance(args.nnz_fractions, list) else _float_list(args.nnz_fractions)
        nnz_grid = sorted({max(1, int(round(f * args.n))) for f in fracs})
    noise_grid = args.noise_grid if isinstance(args.noise_grid, list) else _float_list(args.noise_grid)
    if any(not 1 <= k <= args.n for k in nnz_grid):
        raise UsageError("nonzero counts must lie in [1, n]")
    if any(not v >= 0.0 for v in noise_grid):
        raise UsageError("noise fractions must be non-negative")
    iters = None
    if args.iters is not None:
        iters = {s: args.iters * (2 if s in (PathSolver.ISTA, PathSolver.FISTA) else 1) for s in solvers}
    rows = sweep_contours(MatrixKind.parse(args.matrix_kind), args.m, args.n, nnz_grid, noise_grid, solvers,
                          args.trials, args.seed, cfg, iters=iters, n_tau=args.tau_points,
                          start_div=args.tau_start_div, end_div=args.tau_end_div, workers=args.workers)
    out = _out_dir(args)
    write_records(rows, out / "sweep.csv")


def cmd_image_demo(args):
    cfg = _solver_config(args)
    _validate_grid_args(args)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if not args.noise >= 0.0:
        raise UsageError("--noise must be non-negative")
    image = read_matrix(args.image) if args.image else phantom()
    if args.m < 2:
        raise UsageError("--m must be at least 2")
    rows = []
    for t in range(args.trials):
        rows += image_demo(image, args.m, args.noise, args.seed + t, cfg, kind=MatrixKind.parse(args.matrix_kind),
                           n_tau=args.tau_points, trial=t)
    out = _out_dir(args)
    write_records(rows, out / "image_demo.csv")
    for r in rows:
        if r.trial == 0:
            write_matrix(out / f"image_{r.method}.mtx", r.solution)


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "path": cmd_path,
    "sweep": cmd_sweep,
    "image-demo": cmd_image_demo,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ErfSmoothError, OSError, ValueError) as exc:
        print(f"erfsmooth {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
