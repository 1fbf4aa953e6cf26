"""Sparse recovery by minimising erf-smoothed l1 / lp surrogates."""

from .errors import (
    DegenerateCurvatureError,
    DegenerateGradientError,
    DegenerateProblemError,
    DimensionError,
    DomainError,
    ErfSmoothError,
    NumericalError,
    ParseError,
    ResolutionError,
    UnsupportedCombinationError,
)
from .kernels import SmoothingKind, ScalarJet, erf, gauss_kernel, smooth_abs, l1_distance_quadrature
from .objectives import (
    HessianOperator,
    ObjectiveSpec,
    ProblemData,
    f_p_value,
    g_p_sigma,
    h_gradient,
    h_hessian,
    h_value,
)
from .line_search import (
    LineSearchConfig,
    LineSearchMethod,
    backtracking,
    secant_fd_step,
    taylor_hessian_step,
)
from .solvers import (
    IterateTrace,
    SolverConfig,
    Threshold,
    fista,
    hard_threshold,
    ista,
    newton,
    nonlinear_cg,
    optimality_threshold,
    polak_ribiere_beta,
    soft_threshold,
    steepest_descent,
)
from .problems import (
    MatrixKind,
    MatrixType,
    PathRecord,
    PathSolver,
    TauGrid,
    add_noise,
    gen_matrix,
    gen_sparse_signal,
    image_demo,
    make_problem,
    min_percent_error,
    percent_error,
    phantom,
    run_path,
    select_by_discrepancy,
    sweep_contours,
    tau_grid,
)

__version__ = "0.1.0"
