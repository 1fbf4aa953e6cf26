import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from erfsmooth import solvers
from erfsmooth.errors import DegenerateGradientError, DomainError, UnsupportedCombinationError
from erfsmooth.kernels import SmoothingKind
from erfsmooth.line_search import LineSearchConfig, LineSearchMethod
from erfsmooth.objectives import ProblemData, f_p_value
from erfsmooth.problems import MatrixKind, MatrixType, make_problem
from erfsmooth.solvers import (
    SolverConfig,
    Threshold,
    fista,
    hard_threshold,
    ista,
    landweber_scale,
    newton,
    nonlinear_cg,
    optimality_threshold,
    polak_ribiere_beta,
    soft_threshold,
    steepest_descent,
)

from oracles import lasso_identity

vectors = arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e3, 1e3, allow_nan=False))
levels = st.floats(0.0, 100.0, allow_nan=False)


def identity_problem(seed=0, n=100):
    b = np.random.default_rng(seed).standard_normal(n)
    return ProblemData(np.eye(n), b), b


def test_soft_threshold_examples():
    assert np.array_equal(soft_threshold([3.0, -0.5, 1.0], 1.0), [2.0, 0.0, 0.0])
    x = np.array([0.2, -3.0])
    assert np.array_equal(soft_threshold(x, 0.0), x)


def test_hard_threshold_examples():
    assert np.array_equal(hard_threshold([3.0, -0.5, 1.0], 1.0), [3.0, 0.0, 0.0])
    x = np.array([0.2, -3.0, 0.0])
    assert np.array_equal(hard_threshold(x, 0.0), x)


@given(vectors, levels)
def test_soft_threshold_properties(x, tau):
    y = soft_threshold(x, tau)
    assert np.all(np.sign(y) * np.sign(x) >= 0)
    assert np.allclose(np.abs(y), np.maximum(0, np.abs(x) - tau))
    # nonzero outputs have a pre-image beyond the threshold
    assert np.all((y == 0) | (np.abs(x) > tau))


@given(vectors, levels)
def test_hard_threshold_properties(x, tau):
    y = hard_threshold(x, tau)
    assert np.array_equal(hard_threshold(y, tau), y)
    assert np.all((y == 0) | (np.abs(y) > tau))


def test_threshold_rejects_negative_level():
    with pytest.raises(DomainError):
        soft_threshold([1.0], -1.0)
    with pytest.raises(DomainError):
        hard_threshold([1.0], -1.0)


def test_optimality_threshold():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 8))
    b = rng.standard_normal(5)
    prob = ProblemData(A, b)
    assert np.array_equal(optimality_threshold(prob, np.zeros(8), prob.tau_max), np.zeros(8))
    I = ProblemData(np.eye(4), np.array([5.0, -5.0, 4.0, -6.0]))
    x = np.array([1.0, 1.0, -1.0, 2.0])
    assert np.array_equal(optimality_threshold(I, x, 0.5), x)
    b = np.random.default_rng(1).standard_normal(50)
    tau = 0.5
    xs = lasso_identity(b, tau)
    out = optimality_threshold(ProblemData(np.eye(50), b), xs, tau)
    assert np.array_equal(out[xs == 0], np.zeros(int(np.sum(xs == 0))))


def test_polak_ribiere():
    g = np.array([1.0, 2.0])
    assert polak_ribiere_beta(g, g) == 0.0
    assert polak_ribiere_beta(np.array([0.0, 1.0]), np.array([1.0, 0.0])) == 1.0
    assert polak_ribiere_beta(np.array([0.5, 0.0]), np.array([1.0, 0.0])) == 0.0
    with pytest.raises(DegenerateGradientError):
        polak_ribiere_beta(g, np.zeros(2))


def test_config_validation():
    with pytest.raises(DomainError):
        SolverConfig(tau=1.0, alpha=1.0)
    with pytest.raises(DomainError):
        SolverConfig(tau=-1.0)
    with pytest.raises(UnsupportedCombinationError):
        SolverConfig(tau=1.0, p=0.5, kind=SmoothingKind.SQRT_EPS)
    cfg = SolverConfig(tau=1.0)
    assert cfg.initial_sigma(np.zeros(3)) == 0.1
    assert cfg.initial_sigma(np.array([0.0, -4.0])) == pytest.approx(4e-3)
    assert SolverConfig(tau=1.0, p=0.5).line_search_config.method is LineSearchMethod.SECANT_FD
    assert cfg.line_search_config.method is LineSearchMethod.TAYLOR_HESSIAN


@pytest.mark.parametrize("solver,tol", [(steepest_descent, 1e-4), (nonlinear_cg, 1e-6)])
def test_identity_oracle_smooth(solver, tol):
    prob, b = identity_problem()
    tau = 0.3 * np.abs(b).max()
    x, trace = solver(prob, SolverConfig(tau=tau), np.zeros(100))
    assert np.linalg.norm(x - lasso_identity(b, tau)) <= tol * np.linalg.norm(b)
    assert len(trace) == 50


@pytest.mark.parametrize("method,tol", [(ista, 1e-4), (fista, 1e-6)])
def test_identity_oracle_proximal(method, tol):
    prob, b = identity_problem()
    tau = 0.3 * np.abs(b).max()
    x = method(prob, tau, 50, np.zeros(100))
    assert np.linalg.norm(x - lasso_identity(b, tau)) <= tol * np.linalg.norm(b)


def test_identity_one_step():
    prob, b = identity_problem(3, 20)
    tau = 0.4
    xs = lasso_identity(b, tau)
    assert landweber_scale(prob) == 1.0
    assert np.array_equal(ista(prob, tau, 1, np.zeros(20)), xs)
    assert np.array_equal(fista(prob, tau, 1, np.zeros(20)), xs)
    assert np.allclose(ista(prob, tau, 5, xs), xs, rtol=0, atol=1e-15)
    # fixed point of the ISTA map at the closed-form solution
    assert np.allclose(soft_threshold(xs + b - xs, tau), xs, atol=1e-12, rtol=0)


def test_hard_threshold_on_identity_gives_iht_point():
    # with A = I the Landweber probe is b itself, so Hard lands on H_tau(b)
    prob, b = identity_problem(4)
    tau = 0.3 * np.abs(b).max()
    x, _ = nonlinear_cg(prob, SolverConfig(tau=tau, threshold=Threshold.HARD), np.zeros(100))
    assert np.allclose(x, hard_threshold(b, tau), rtol=0, atol=1e-12)


def test_optimality_threshold_contract_in_solver():
    # every iterate is zero wherever |A^T(b - Ay)| <= tau held at the
    # line-search point, so the support of the result satisfies |v_k| > tau
    prob, b = identity_problem(4)
    tau = 0.3 * np.abs(b).max()
    x, trace = nonlinear_cg(prob, SolverConfig(tau=tau, threshold=Threshold.OPTIMALITY, max_iters=1), np.zeros(100))
    assert np.all(np.isfinite(x))
    assert np.all(np.abs(b[x != 0]) > tau)


def test_minimiser_start_does_not_move():
    prob, b = identity_problem(5)
    tau = 0.3 * np.abs(b).max()
    xs = lasso_identity(b, tau)
    x, trace = steepest_descent(prob, SolverConfig(tau=tau, sigma0=1e-9, max_iters=1), xs)
    assert np.linalg.norm(x - xs) <= 1e-6


def test_large_tau_returns_zero():
    rng = np.random.default_rng(6)
    prob = ProblemData(rng.standard_normal((20, 30)), rng.standard_normal(20))
    cfg = SolverConfig(tau=1.5 * prob.tau_max, threshold=Threshold.OPTIMALITY)
    x, _ = steepest_descent(prob, cfg, np.zeros(30))
    assert not np.any(x)


def test_annealing_schedule_and_trace():
    prob = make_problem(MatrixKind(), 40, 60, 5, 0.05, 1)
    cfg = SolverConfig(tau=prob.tau_max / 50, sigma0=0.3, alpha=0.7, max_iters=40)
    x, trace = nonlinear_cg(prob, cfg, np.zeros(60))
    sig = trace.column("sigma")
    assert np.array_equal(sig, [max(0.3 * 0.7**k, 1e-12) for k in range(40)])
    assert np.array_equal(trace.column("iteration"), np.arange(40))
    assert np.all(trace.column("nonzeros") <= 60)
    assert np.all(np.isfinite(x))
    assert trace[-1].f1_value == pytest.approx(f_p_value(prob, x, 1.0, cfg.tau), rel=1e-12)


def test_sigma_floor():
    prob, b = identity_problem(7, 10)
    x, trace = nonlinear_cg(prob, SolverConfig(tau=0.1, sigma0=1e-10, alpha=0.1, max_iters=5), np.zeros(10))
    assert trace[-1].sigma == 1e-12


def test_cg_with_zero_beta_is_steepest_descent(monkeypatch):
    prob = make_problem(MatrixKind(MatrixType.TYPE_II), 50, 50, 5, 0.1, 2)
    cfg = SolverConfig(tau=prob.tau_max / 100, max_iters=30)
    x_sd, tr_sd = steepest_descent(prob, cfg, np.zeros(50))
    monkeypatch.setattr(solvers, "polak_ribiere_beta", lambda g_new, g_old: 0.0)
    x_cg, tr_cg = nonlinear_cg(prob, cfg, np.zeros(50))
    assert np.array_equal(x_sd, x_cg)
    assert np.array_equal(tr_sd.column("h_value"), tr_cg.column("h_value"))


def test_threshold_guarantee_in_iterates():
    prob = make_problem(MatrixKind(), 40, 60, 5, 0.05, 3)
    tau = prob.tau_max / 20
    c_tau = tau / landweber_scale(prob) ** 2
    x, _ = nonlinear_cg(prob, SolverConfig(tau=tau, threshold=Threshold.HARD, max_iters=20), np.zeros(60))
    assert np.all((x == 0) | (np.abs(x) > c_tau))


def test_nonconvex_run_engages_beta_clamp():
    prob = make_problem(MatrixKind(MatrixType.TYPE_II), 80, 80, 8, 0.1, 4)
    cfg = SolverConfig(tau=prob.tau_max / 100, p=0.83, max_iters=50)
    x, trace = nonlinear_cg(prob, cfg, np.zeros(80))
    assert np.all(np.isfinite(x))
    assert np.any(trace.column("beta")[:-1] == 0.0)


def test_backtracking_only_configuration():
    prob, b = identity_problem(8, 30)
    tau = 0.3 * np.abs(b).max()
    cfg = SolverConfig(tau=tau, line_search=LineSearchConfig(method=LineSearchMethod.BACKTRACKING))
    x, _ = nonlinear_cg(prob, cfg, np.zeros(30))
    assert np.linalg.norm(x - lasso_identity(b, tau)) <= 1e-4 * np.linalg.norm(b)


def test_stop_tol_ends_early():
    prob, b = identity_problem(9, 30)
    tau = 0.3 * np.abs(b).max()
    x, trace = nonlinear_cg(prob, SolverConfig(tau=tau, stop_tol=1e-10, max_iters=50), np.zeros(30))
    assert len(trace) < 50


def test_newton_least_squares_in_one_step():
    rng = np.random.default_rng(10)
    A = rng.standard_normal((20, 10))
    b = rng.standard_normal(20)
    prob = ProblemData(A, b)
    x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    x, trace = newton(prob, SolverConfig(tau=1e-12, max_iters=1), np.zeros(10))
    assert np.linalg.norm(x - x_ls) <= 1e-8 * np.linalg.norm(x_ls)


def test_newton_at_minimiser():
    prob, b = identity_problem(11, 40)
    tau = 0.3 * np.abs(b).max()
    xs = lasso_identity(b, tau)
    x, trace = newton(prob, SolverConfig(tau=tau, sigma0=1e-9, max_iters=3), xs)
    assert np.linalg.norm(x - xs) <= 1e-8 * np.linalg.norm(b)


def test_newton_rejects_huber():
    prob, _ = identity_problem(12, 5)
    with pytest.raises(DomainError):
        newton(prob, SolverConfig(tau=0.1, kind=SmoothingKind.HUBER), np.zeros(5))


def test_fista_without_momentum_is_ista():
    prob = make_problem(MatrixKind(MatrixType.TYPE_III), 30, 40, 4, 0.1, 5)
    tau = prob.tau_max / 30
    a = ista(prob, tau, 60, np.zeros(40))
    b = fista(prob, tau, 60, np.zeros(40), accelerate=False)
    assert np.array_equal(a, b)


def test_ista_monotone():
    for seed in range(5):
        prob = make_problem(MatrixKind(), 40, 50, 5, 0.1, seed)
        tau = prob.tau_max / 30
        vals = []
        ista(prob, tau, 60, np.zeros(50), callback=lambda k, x: vals.append(f_p_value(prob, x, 1.0, tau)))
        assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


def _median_f1(solver_fn, seeds=range(10)):
    out = []
    for seed in seeds:
        prob = make_problem(MatrixKind(), 200, 200, 20, 0.1, seed)
        tau = prob.tau_max / 100
        out.append(solver_fn(prob, tau))
    return np.array(out)


def test_fista_beats_ista_at_100_iterations():
    f_ista = _median_f1(lambda p, t: f_p_value(p, ista(p, t, 100, np.zeros(200)), 1.0, t))
    f_fista = _median_f1(lambda p, t: f_p_value(p, fista(p, t, 100, np.zeros(200)), 1.0, t))
    assert np.median(f_fista) <= np.median(f_ista) * 1.01


def test_cg_f1_against_ista():
    f_cg = _median_f1(lambda p, t: f_p_value(p, nonlinear_cg(p, SolverConfig(tau=t), np.zeros(200))[0], 1.0, t))
    f_ista = _median_f1(lambda p, t: f_p_value(p, ista(p, t, 100, np.zeros(200)), 1.0, t))
    assert np.median(f_cg) <= np.median(f_ista) * 1.05


def test_sandwich_f1_on_type_ii():
    from erfsmooth.problems import PathSolver, Sandwich, _solve_one

    ratios = []
    for seed in range(5):
        prob = make_problem(MatrixKind(MatrixType.TYPE_II), 100, 100, 10, 0.1, seed)
        cfg = SolverConfig(tau=prob.tau_max / 100)
        x_cg, _ = nonlinear_cg(prob, cfg, np.zeros(100))
        x_sw, _ = _solve_one(prob, PathSolver.CG_NEWTON_SANDWICH, cfg, np.zeros(100), Sandwich())
        ratios.append(f_p_value(prob, x_sw, 1.0, cfg.tau) / f_p_value(prob, x_cg, 1.0, cfg.tau))
    assert np.median(ratios) <= 1.05
