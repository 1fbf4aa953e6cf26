"""Test-problem generators, warm-started regularisation paths and sweeps."""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateProblemError, DomainError, NumericalError
from .objectives import ProblemData, f_p_value
from .solvers import SolverConfig, fista, ista, newton, nonlinear_cg, steepest_descent

__all__ = [
    "MatrixType",
    "MatrixKind",
    "PathSolver",
    "Sandwich",
    "TauGrid",
    "PathRecord",
    "SweepRow",
    "NoiseTarget",
    "tau_grid",
    "run_path",
    "min_percent_error",
    "select_by_discrepancy",
    "gen_matrix",
    "gen_sparse_signal",
    "add_noise",
    "percent_error",
    "make_problem",
    "derive_seed",
    "sweep_contours",
    "default_iters",
    "phantom",
    "ImageDemoRow",
    "IMAGE_METHODS",
    "image_demo",
]

log = logging.getLogger(__name__)


class MatrixType(enum.Enum):
    TYPE_I = "I"
    TYPE_II = "II"
    TYPE_III = "III"


@dataclass(frozen=True)
class MatrixKind:
    """Matrix family and its parameters.

    Type I has singular values ``exp(-decay (k-1)/(min(m,n)-1))``.  Type II
    replaces ``ceil(correlated_fraction n)`` columns of a Type I matrix by
    noisy copies of retained columns.  Type III has standard Cauchy entries.
    """

    tag: MatrixType = MatrixType.TYPE_I
    decay: float = 6.0
    correlated_fraction: float = 0.2
    correlation_noise: float = 0.01

    def __post_init__(self):
        if not self.decay > 0.0:
            raise DomainError(f"decay must be positive, got {self.decay!r}")
        if not 0.0 < self.correlated_fraction < 1.0:
            raise DomainError(f"correlated fraction must lie in (0, 1), got {self.correlated_fraction!r}")
        if not self.correlation_noise >= 0.0:
            raise DomainError(f"correlation noise must be non-negative, got {self.correlation_noise!r}")

    @classmethod
    def parse(cls, label: str) -> "MatrixKind":
        return cls(MatrixType(label.upper()))


class PathSolver(enum.Enum):
    SD = "sd"
    CG = "cg"
    CG_NEWTON_SANDWICH = "cg-newton"
    ISTA = "ista"
    FISTA = "fista"


@dataclass(frozen=True)
class Sandwich:
    """Iteration split for CG -> Newton -> CG."""

    cg_before: int = 30
    newton: int = 5
    cg_after: int = 15


class NoiseTarget(enum.Enum):
    RHS = "rhs"
    SIGNAL = "signal"


@dataclass(frozen=True)
class TauGrid:
    values: np.ndarray
    tau_max: float

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class PathRecord:
    tau: float
    solution: np.ndarray
    residual_norm: float
    percent_error: Optional[float]
    f1_value: float
    iterations: int
    wall_seconds: float


@dataclass(frozen=True)
class SweepRow:
    nnz: int
    noise_fraction: float
    solver: str
    median_min_percent_error: float


def tau_grid(prob: ProblemData, n_points: int = 30, start_div: float = 10.0, end_div: float = 5e8) -> TauGrid:
    """Geometric grid from ``tau_max/start_div`` down to ``tau_max/end_div``."""
    if n_points < 2:
        raise DomainError(f"need at least 2 grid points, got {n_points}")
    if not 0.0 < start_div < end_div:
        raise DomainError(f"need 0 < start_div < end_div, got {start_div!r}, {end_div!r}")
    tau_max = prob.tau_max
    if tau_max == 0.0:
        raise DegenerateProblemError("A^T b is zero, every tau gives the zero solution")
    hi, lo = tau_max / start_div, tau_max / end_div
    values = np.exp(np.linspace(np.log(hi), np.log(lo), n_points))
    values[0], values[-1] = hi, lo
    values.setflags(write=False)
    return TauGrid(values, tau_max)


def default_iters(solver: PathSolver) -> int:
    """Per-tau iteration budget: 50 for the smooth solvers, 100 for ISTA/FISTA."""
    return 100 if solver in (PathSolver.ISTA, PathSolver.FISTA) else 50


def _solve_one(prob, solver, cfg, x0, sandwich):
    """Run one solver at cfg.tau; returns (x, iterations)."""
    if solver is PathSolver.ISTA:
        return ista(prob, cfg.tau, cfg.max_iters, x0), cfg.max_iters
    if solver is PathSolver.FISTA:
        return fista(prob, cfg.tau, cfg.max_iters, x0), cfg.max_iters
    if solver is PathSolver.SD:
        x, tr = steepest_descent(prob, cfg, x0)
        return x, len(tr)
    if solver is PathSolver.CG:
        x, tr = nonlinear_cg(prob, cfg, x0)
        return x, len(tr)
    # sigma keeps annealing across the three stages
    sigma0 = cfg.initial_sigma(x0)
    total = 0
    x = x0
    for stage, iters in ((nonlinear_cg, sandwich.cg_before), (newton, sandwich.newton), (nonlinear_cg, sandwich.cg_after)):
        x, tr = stage(prob, cfg.replace(sigma0=sigma0, max_iters=iters), x)
        total += len(tr)
        if len(tr):
            sigma0 = max(tr.last_sigma * cfg.alpha, 1e-12)
    return x, total


def run_path(
    prob: ProblemData,
    solver: PathSolver,
    cfg: SolverConfig,
    grid: TauGrid,
    *,
    warm_start: bool = True,
    sandwich: Sandwich = Sandwich(),
) -> list:
    """Solve along a descending tau grid, warm-starting each solve.

    The first solve starts from zero.  ``cfg.tau`` is ignored; every other
    setting, including the iteration budget, applies at each tau.  With the
    default ``cfg.sigma0=None`` the smoothing width restarts at every tau from
    a value tied to the warm start (see :class:`SolverConfig`).

    Raises
    ------
    NumericalError
        With ``tau`` set to the grid value whose solve failed.
    """
    n = prob.n
    x = np.zeros(n)
    records = []
    for tau in grid.values:
        tau = float(tau)
        x0 = x if warm_start else np.zeros(n)
        t0 = time.perf_counter()
        try:
            x, iters = _solve_one(prob, solver, cfg.replace(tau=tau), x0, sandwich)
        except NumericalError as exc:
            exc.tau = tau
            raise
        wall = time.perf_counter() - t0
        r = prob.A @ x - prob.b
        pe = None if prob.truth is None else percent_error(x, prob.truth)
        x.setflags(write=False)
        records.append(PathRecord(tau, x, float(np.linalg.norm(r)), pe, f_p_value(prob, x, 1.0, tau), iters, wall))
    return records


def min_percent_error(records: Iterable[PathRecord]) -> float:
    errs = [r.percent_error for r in records if r.percent_error is not None]
    if not errs:
        raise DomainError("records carry no percent errors")
    return float(min(errs))


def select_by_discrepancy(records: Sequence[PathRecord], noise_norm: float) -> PathRecord:
    """Record whose residual norm is closest to the noise norm."""
    return min(records, key=lambda r: abs(r.residual_norm - noise_norm))


def _rng(seed):
    return np.random.default_rng(seed)


def _orthonormal(rng, rows, cols):
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def gen_matrix(kind: MatrixKind, m: int, n: int, seed: int) -> np.ndarray:
    """Random test matrix of the given family, deterministic per seed."""
    if m < 2 or n < 2:
        raise DomainError(f"matrix dimensions must be at least 2, got {m}x{n}")
    rng = _rng(seed)
    if kind.tag is MatrixType.TYPE_III:
        return rng.standard_normal((m, n)) / rng.standard_normal((m, n))
    k = min(m, n)
    U = _orthonormal(rng, m, k)
    V = _orthonormal(rng, n, k)
    s = np.exp(-kind.decay * np.arange(k) / (k - 1))
    A = (U * s) @ V.T
    if kind.tag is MatrixType.TYPE_II:
        n_corr = math.ceil(kind.correlated_fraction * n)
        perm = rng.permutation(n)
        targets, retained = perm[:n_corr], perm[n_corr:]
        bases = rng.choice(retained, size=n_corr)
        for j, r in zip(targets, bases):
            g = rng.standard_normal(m)
            g /= np.linalg.norm(g)
            A[:, j] = A[:, r] + kind.correlation_noise * np.linalg.norm(A[:, r]) * g
    return A


def gen_sparse_signal(n: int, nnz: int, seed: int) -> np.ndarray:
    """Vector with `nnz` standard Gaussian entries at random positions."""
    if not 1 <= nnz <= n:
        raise DomainError(f"need 1 <= nnz <= n, got nnz={nnz}, n={n}")
    rng = _rng(seed)
    x = np.zeros(n)
    idx = rng.choice(n, size=nnz, replace=False)
    vals = rng.standard_normal(nnz)
    # a Gaussian draw of exactly zero would lose a nonzero
    vals[vals == 0.0] = 1.0
    x[idx] = vals
    return x


def add_noise(v, fraction: float, seed: int) -> np.ndarray:
    """``v + e`` with Gaussian e scaled to ``||e|| = fraction ||v||``."""
    v = np.asarray(v, dtype=float)
    if not fraction >= 0.0:
        raise DomainError(f"noise fraction must be non-negative, got {fraction!r}")
    if fraction == 0.0:
        return v.copy()
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise DegenerateProblemError("cannot scale noise relative to a zero vector")
    e = _rng(seed).standard_normal(v.shape)
    return v + (fraction * nv / np.linalg.norm(e)) * e


def percent_error(estimate, truth) -> float:
    """``100 ||estimate - truth|| / ||truth||``."""
    truth = np.asarray(truth, dtype=float)
    nt = np.linalg.norm(truth)
    if nt == 0.0:
        raise DomainError("percent error is undefined for a zero reference")
    return float(100.0 * np.linalg.norm(np.asarray(estimate, dtype=float) - truth) / nt)


def derive_seed(*parts: int) -> int:
    """Deterministic 63-bit seed from integer parts."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def make_problem(
    kind: MatrixKind,
    m: int,
    n: int,
    nnz: int,
    noise: float,
    seed: int,
    noise_target: NoiseTarget = NoiseTarget.RHS,
    signal: Optional[np.ndarray] = None,
) -> ProblemData:
    """Random matrix, sparse ground truth and noisy data.

    With ``NoiseTarget.RHS`` the data are ``b = Ax + e``, ``||e|| = noise ||Ax||``.
    With ``NoiseTarget.SIGNAL`` they are ``b = A(x + e)``, ``||e|| = noise ||x||``.
    A given `signal` replaces the random sparse vector (nnz is then ignored).
    """
    A = gen_matrix(kind, m, n, derive_seed(seed, 0))
    x = gen_sparse_signal(n, nnz, derive_seed(seed, 1)) if signal is None else np.asarray(signal, dtype=float)
    if noise_target is NoiseTarget.RHS:
        b = add_noise(A @ x, noise, derive_seed(seed, 2))
    else:
        b = A @ add_noise(x, noise, derive_seed(seed, 2))
    return ProblemData(A, b, x)


def _sweep_cell(args):
    kind, m, n, nnz, noise, solvers, trials, seed, cell, cfg_for, grid_args = args
    out = []
    for solver in solvers:
        vals = []
        for trial in range(trials):
            try:
                prob = make_problem(kind, m, n, nnz, noise, derive_seed(seed, cell, trial))
                recs = run_path(prob, solver, cfg_for[solver], tau_grid(prob, *grid_args))
                vals.append(min_percent_error(recs))
            except Exception as exc:  # noqa: BLE001 - a failed cell must not abort the sweep
                log.warning("sweep cell nnz=%d noise=%g solver=%s trial=%d failed: %s", nnz, noise, solver.value, trial, exc)
                vals.append(np.nan)
        out.append(SweepRow(nnz, noise, solver.value, float(np.median(vals))))
    return out


def sweep_contours(
    kind: MatrixKind,
    m: int,
    n: int,
    nnz_grid: Sequence[int],
    noise_grid: Sequence[float],
    solvers: Sequence[PathSolver],
    trials: int,
    seed: int,
    cfg: Optional[SolverConfig] = None,
    *,
    iters: Optional[dict] = None,
    n_tau: int = 30,
    start_div: float = 10.0,
    end_div: float = 5e8,
    workers: int = 1,
) -> list:
    """Median over trials of the min-over-tau percent error per grid cell.

    Trial seeds are ``derive_seed(seed, cell, trial)`` so the table does not
    depend on `workers`.  A failing trial contributes NaN to its cell.
    """
    if not nnz_grid or not noise_grid or not solvers:
        raise DomainError("grids and solver list must be non-empty")
    if trials < 1:
        raise DomainError(f"need at least one trial, got {trials}")
    base = cfg if cfg is not None else SolverConfig(tau=1.0)
    budgets = {s: default_iters(s) for s in solvers}
    budgets.update(iters or {})
    cfg_for = {s: base.replace(max_iters=budgets[s]) for s in solvers}
    jobs = []
    cell = 0
    for nnz in nnz_grid:
        for noise in noise_grid:
            jobs.append((kind, m, n, int(nnz), float(noise), tuple(solvers), trials, seed, cell, cfg_for, (n_tau, start_div, end_div)))
            cell += 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_sweep_cell, jobs))
    else:
        parts = [_sweep_cell(j) for j in jobs]
    return [row for part in parts for row in part]


def phantom(height: int = 21, width: int = 25) -> np.ndarray:
    """Small piecewise-constant test image with a few sparse shapes."""
    img = np.zeros((height, width))
    yy, xx = np.mgrid[:height, :width]
    sy, sx = height / 21.0, width / 25.0
    img[((yy - 6 * sy) / sy) ** 2 + ((xx - 7 * sx) / sx) ** 2 <= 9] = 1.0
    img[int(3 * sy):int(5 * sy), int(14 * sx):int(22 * sx)] = 0.7
    img[int(13 * sy):int(18 * sy), int(16 * sx):int(18 * sx)] = 0.5
    img[((yy - 15 * sy) / sy) ** 2 + ((xx - 6 * sx) / sx) ** 2 <= 4] = 0.9
    return img


@dataclass(frozen=True)
class ImageDemoRow:
    method: str
    percent_error: float
    tau: float
    solution: np.ndarray
    trial: int = 0


# (label, path solver, p)
IMAGE_METHODS = (
    ("fista", PathSolver.FISTA, 1.0),
    ("cg-p1", PathSolver.CG, 1.0),
    ("cg-newton-p1", PathSolver.CG_NEWTON_SANDWICH, 1.0),
    ("cg-p0.83", PathSolver.CG, 0.83),
)


def image_demo(
    image: np.ndarray,
    m: int,
    noise: float = 0.25,
    seed: int = 0,
    cfg: Optional[SolverConfig] = None,
    *,
    kind: MatrixKind = MatrixKind(MatrixType.TYPE_II),
    n_tau: int = 30,
    trial: int = 0,
    methods=IMAGE_METHODS,
) -> list:
    """Recover a sparse image from ``b = A(x + e)`` with each method.

    Each method runs the warm-started path and reports the grid point with
    the smallest percent error.
    """
    x = np.asarray(image, dtype=float).ravel()
    prob = make_problem(kind, m, x.size, 1, noise, seed, NoiseTarget.SIGNAL, signal=x)
    grid = tau_grid(prob, n_tau)
    base = cfg if cfg is not None else SolverConfig(tau=1.0)
    rows = []
    for label, solver, p in methods:
        run_cfg = base.replace(p=p, max_iters=default_iters(solver))
        recs = run_path(prob, solver, run_cfg, grid)
        best = min(recs, key=lambda r: r.percent_error)
        rows.append(ImageDemoRow(label, best.percent_error, best.tau, best.solution.reshape(np.shape(image)), trial))
    return rows
