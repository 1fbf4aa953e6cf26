"""Smoothed-surrogate solvers (SD, nonlinear CG, Newton) and ISTA/FISTA.

The smooth solvers minimise ``H_{p,sigma}`` while shrinking ``sigma`` by a
factor ``alpha`` per iteration and re-imposing sparsity after each step.

Two details keep the iteration stable near the non-smooth minimiser:

* Components that are zero and satisfy the l1 optimality condition
  ``|A^T(b - Ax)_k| <= tau`` are frozen: their gradient entries are set
  to zero, so the search direction and the curvature estimate ignore them.
* ``Threshold(y)`` acts on the Landweber probe ``y + c A^T(b - Ay)`` with
  ``c = 1/||A||^2`` at level ``c tau``.  For ``Soft`` this is one ISTA step
  taken from the line-search point.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateCurvatureError, DegenerateGradientError, DomainError, NumericalError
from .kernels import SIGMA_MIN, SmoothingKind
from .line_search import (
    LineSearchConfig,
    LineSearchMethod,
    backtracking,
    fd_probe_width,
    secant_fd_step,
    taylor_hessian_step,
)
from .objectives import (
    HessianOperator,
    ObjectiveSpec,
    ProblemData,
    regularizer_gradient,
    regularizer_hessian,
    regularizer_value,
)

__all__ = [
    "Threshold",
    "SolverConfig",
    "TraceRecord",
    "IterateTrace",
    "soft_threshold",
    "hard_threshold",
    "optimality_threshold",
    "polak_ribiere_beta",
    "steepest_descent",
    "nonlinear_cg",
    "newton",
    "ista",
    "fista",
    "landweber_scale",
]

log = logging.getLogger(__name__)

FALLBACK_STEP = 1e-8


class Threshold(enum.Enum):
    SOFT = "soft"
    HARD = "hard"
    OPTIMALITY = "optimality"


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the smooth-surrogate solvers.

    ``sigma0=None`` picks ``sigma0_scale * max(1, ||x0||_inf)`` for a zero
    initial guess and ``warm_sigma_scale * max(1, ||x0||_inf)`` otherwise.
    ``line_search=None`` selects the Taylor step for p = 1 and the secant
    step for p < 1.
    """

    tau: float
    p: float = 1.0
    sigma0: Optional[float] = None
    alpha: float = 0.8
    max_iters: int = 50
    kind: SmoothingKind = SmoothingKind.CONV_PHI
    line_search: Optional[LineSearchConfig] = None
    threshold: Threshold = Threshold.SOFT
    newton_inner_iters: int = 15
    newton_tol: float = 1e-10
    newton_damping: bool = True
    stop_tol: float = 0.0
    sigma0_scale: float = 0.1
    warm_sigma_scale: float = 1e-3

    def __post_init__(self):
        # building an ObjectiveSpec validates p, tau and the kind/p combination
        ObjectiveSpec(self.p, self.tau, 1.0, self.kind)
        if self.sigma0 is not None and not (np.isfinite(self.sigma0) and self.sigma0 >= SIGMA_MIN):
            raise DomainError(f"sigma0 must be >= {SIGMA_MIN:g}, got {self.sigma0!r}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.max_iters < 0 or self.newton_inner_iters < 0:
            raise DomainError("iteration counts must be non-negative")
        if not self.newton_tol > 0.0:
            raise DomainError(f"newton_tol must be positive, got {self.newton_tol!r}")
        if not self.stop_tol >= 0.0:
            raise DomainError(f"stop_tol must be non-negative, got {self.stop_tol!r}")
        if not (self.sigma0_scale > 0.0 and self.warm_sigma_scale > 0.0):
            raise DomainError("sigma scales must be positive")

    @property
    def line_search_config(self) -> LineSearchConfig:
        if self.line_search is not None:
            return self.line_search
        method = LineSearchMethod.TAYLOR_HESSIAN if self.p == 1.0 else LineSearchMethod.SECANT_FD
        return LineSearchConfig(method=method)

    def initial_sigma(self, x0) -> float:
        if self.sigma0 is not None:
            return float(self.sigma0)
        x0 = np.asarray(x0)
        scale = self.warm_sigma_scale if np.any(x0) else self.sigma0_scale
        return max(scale * max(1.0, float(np.max(np.abs(x0), initial=0.0))), SIGMA_MIN)

    def sigma_at(self, sigma0: float, n: int) -> float:
        return max(sigma0 * self.alpha**n, SIGMA_MIN)

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    sigma: float
    h_value: float
    f1_value: float
    residual_norm: float
    step: float
    nonzeros: int
    beta: float = 0.0
    flagged: bool = False


@dataclass
class IterateTrace:
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def last_sigma(self) -> Optional[float]:
        return self.records[-1].sigma if self.records else None


def soft_threshold(x, tau: float) -> np.ndarray:
    """Componentwise shrinkage ``sign(x) max(|x| - tau, 0)``."""
    if tau < 0:
        raise DomainError(f"threshold must be non-negative, got {tau!r}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def hard_threshold(x, tau: float) -> np.ndarray:
    """Keep entries with ``|x_k| > tau``, zero the rest."""
    if tau < 0:
        raise DomainError(f"threshold must be non-negative, got {tau!r}")
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) > tau, x, 0.0)


def optimality_threshold(prob: ProblemData, x, tau: float) -> np.ndarray:
    """Zero the entries where ``|A^T(b - Ax)_k| <= tau``."""
    x = prob.check_x(x)
    v = prob.atb - prob.gram @ x
    return np.where(np.abs(v) <= tau, 0.0, x)


def polak_ribiere_beta(g_new, g_old) -> float:
    """Polak-Ribiere coefficient clamped at zero."""
    denom = float(np.dot(g_old, g_old))
    if denom == 0.0:
        raise DegenerateGradientError("previous gradient is zero")
    return max(float(np.dot(g_new, np.subtract(g_new, g_old))) / denom, 0.0)


def landweber_scale(prob: ProblemData) -> float:
    """Factor s such that ``||A / s||_2 <= 1``.

    The power-iteration estimate is inflated by 1% unless it converged.
    """
    est, converged = prob.spectral_norm
    if est == 0.0:
        raise DomainError("A is the zero matrix")
    return est if converged else 1.01 * est


class _Surrogate:
    """Gradient, curvature and thresholding for one (problem, tau) pair."""

    def __init__(self, prob: ProblemData, cfg: SolverConfig):
        self.prob = prob
        self.cfg = cfg
        self.tau = cfg.tau
        self.c = 1.0 / landweber_scale(prob) ** 2

    def spec(self, sigma):
        return ObjectiveSpec(self.cfg.p, self.tau, sigma, self.cfg.kind)

    def frozen(self, x, Gx):
        return (x == 0.0) & (np.abs(self.prob.atb - Gx) <= self.tau)

    def raw_grad(self, x, sigma, Gx=None):
        if Gx is None:
            Gx = self.prob.gram @ x
        return 2.0 * (Gx - self.prob.atb) + 2.0 * self.tau * regularizer_gradient(self.spec(sigma), x)

    def grad(self, x, sigma, Gx):
        g = self.raw_grad(x, sigma, Gx)
        g[self.frozen(x, Gx)] = 0.0
        return g

    def value(self, x, sigma):
        r = self.prob.A @ x - self.prob.b
        return float(r @ r) + 2.0 * self.tau * regularizer_value(self.spec(sigma), x)

    def hessian(self, x, sigma):
        diag, v = regularizer_hessian(self.spec(sigma), x)
        w = 2.0 * self.tau
        return HessianOperator(self.prob.gram, w * diag, v, w if v is not None else 0.0)

    def threshold(self, y, Gy):
        v = self.prob.atb - Gy
        kind = self.cfg.threshold
        if kind is Threshold.OPTIMALITY:
            return np.where(np.abs(v) <= self.tau, 0.0, y)
        z = y + self.c * v
        if kind is Threshold.SOFT:
            return soft_threshold(z, self.c * self.tau)
        return hard_threshold(z, self.c * self.tau)

    def record(self, it, sigma, x, mu, beta=0.0, flagged=False):
        r = self.prob.A @ x - self.prob.b
        rr = float(r @ r)
        h = rr + 2.0 * self.tau * regularizer_value(self.spec(sigma), x)
        f1 = rr + 2.0 * self.tau * float(np.abs(x).sum())
        return TraceRecord(it, sigma, h, f1, float(np.sqrt(rr)), float(mu), int(np.count_nonzero(x)), float(beta), flagged)

    def step(self, x, g, d, sigma):
        """Step length along the descent direction d; returns (mu, flagged)."""
        ls = self.cfg.line_search_config
        mu = None
        try:
            if ls.method is LineSearchMethod.TAYLOR_HESSIAN:
                mu = taylor_hessian_step(g, self.hessian(x, sigma), d)
            elif ls.method is LineSearchMethod.SECANT_FD:
                # frozen entries of d are zero, so the unprojected gradient suffices
                xi = fd_probe_width(x, ls.xi_scale)
                mu = secant_fd_step(lambda z: self.raw_grad(z, sigma), x, d, xi, grad=g)
        except DegenerateCurvatureError:
            mu = None
        if mu is not None and np.isfinite(mu) and mu > 0.0:
            return mu, False
        bt_cfg = ls if ls.method is LineSearchMethod.BACKTRACKING else dataclasses.replace(ls, mu0=1.0)
        res = backtracking(lambda z: self.value(z, sigma), g, x, d, bt_cfg)
        if res.accepted:
            return res.mu, False
        return FALLBACK_STEP, True


def _check_finite(x, what, trace, tau):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite {what}", tau=tau, trace=trace)


def _descent(prob: ProblemData, cfg: SolverConfig, x0, conjugate: bool):
    x = prob.check_x(x0).copy()
    sur = _Surrogate(prob, cfg)
    G = prob.gram
    sigma0 = cfg.initial_sigma(x)
    trace = IterateTrace()
    sigma = cfg.sigma_at(sigma0, 0)
    Gx = G @ x
    g = sur.grad(x, sigma, Gx)
    d = -g
    for it in range(cfg.max_iters):
        flagged = False
        if float(g @ d) >= 0.0:
            d = -g
        if not np.any(d):
            mu, y = 0.0, x
        else:
            try:
                mu, flagged = sur.step(x, g, d, sigma)
            except NumericalError as exc:
                raise NumericalError(str(exc), tau=cfg.tau, trace=trace) from exc
            y = x + mu * d
        x_new = sur.threshold(y, G @ y)
        _check_finite(x_new, "iterate", trace, cfg.tau)
        Gx_new = G @ x_new
        g_new = sur.grad(x_new, sigma, Gx_new)
        beta = 0.0
        if conjugate:
            try:
                beta = polak_ribiere_beta(g_new, g)
            except DegenerateGradientError:
                beta = 0.0
        d = -g_new + beta * d
        rec = sur.record(it, sigma, x_new, mu, beta, flagged)
        if not np.isfinite(rec.h_value):
            raise NumericalError("non-finite objective", tau=cfg.tau, trace=trace)
        trace.append(rec)
        done = cfg.stop_tol > 0.0 and np.linalg.norm(x_new - x) <= cfg.stop_tol * (1.0 + np.linalg.norm(x))
        x, Gx = x_new, Gx_new
        if done:
            break
        sigma = cfg.sigma_at(sigma0, it + 1)
        g = sur.grad(x, sigma, Gx)
    return x, trace


def steepest_descent(prob: ProblemData, cfg: SolverConfig, x0):
    """Steepest descent on the annealed surrogate with thresholding.

    Returns
    -------
    x : ndarray
        Final iterate.
    trace : IterateTrace
        One record per iteration.
    """
    return _descent(prob, cfg, x0, conjugate=False)


def nonlinear_cg(prob: ProblemData, cfg: SolverConfig, x0):
    """Polak-Ribiere nonlinear CG on the annealed surrogate with thresholding.

    Per iteration: line search, threshold, beta from gradients at the
    current sigma, new direction, then sigma <- alpha sigma.  A direction
    that is not a descent direction for the annealed surrogate is reset to
    the negative gradient.
    """
    return _descent(prob, cfg, x0, conjugate=True)


def _linear_cg(apply, rhs, iters, tol):
    """Plain CG for ``M dx = rhs``; stops early on non-positive curvature."""
    dx = np.zeros_like(rhs)
    r = rhs.copy()
    q = r.copy()
    rr = float(r @ r)
    r0 = np.sqrt(rr)
    for _ in range(iters):
        if rr == 0.0 or np.sqrt(rr) <= tol * r0:
            break
        Mq = apply(q)
        qMq = float(q @ Mq)
        if not np.isfinite(qMq):
            raise NumericalError("non-finite curvature in the Newton inner solve")
        if qMq <= 0.0:
            break
        a = rr / qMq
        dx += a * q
        r -= a * Mq
        rr_new = float(r @ r)
        q = r + (rr_new / rr) * q
        rr = rr_new
    return dx


def newton(prob: ProblemData, cfg: SolverConfig, x0):
    """Newton iterations on the annealed surrogate.

    The Newton system is restricted to the non-frozen components and solved
    by at most ``cfg.newton_inner_iters`` matrix-free CG steps.  The inner
    solve stops at relative residual ``cfg.newton_tol`` or at the first
    direction of non-positive curvature.  With ``cfg.newton_damping`` the
    step is shortened by Armijo backtracking from the full Newton step; the
    trace records the step fraction actually taken.
    """
    if not cfg.kind.twice_differentiable:
        raise DomainError("Newton's method needs a twice differentiable smoothing kind")
    x = prob.check_x(x0).copy()
    sur = _Surrogate(prob, cfg)
    G = prob.gram
    sigma0 = cfg.initial_sigma(x)
    trace = IterateTrace()
    for it in range(cfg.max_iters):
        sigma = cfg.sigma_at(sigma0, it)
        Gx = G @ x
        free = ~sur.frozen(x, Gx)
        g = sur.grad(x, sigma, Gx)
        H = sur.hessian(x, sigma)

        def apply(s, H=H, free=free):
            return np.where(free, H.apply(np.where(free, s, 0.0)), 0.0)

        try:
            dx = _linear_cg(apply, -g, cfg.newton_inner_iters, cfg.newton_tol)
        except NumericalError as exc:
            raise NumericalError(str(exc), tau=cfg.tau, trace=trace) from exc
        _check_finite(dx, "Newton step", trace, cfg.tau)
        mu = 1.0
        if cfg.newton_damping and np.any(dx):
            # Armijo damping from the full step; without descent, skip the step
            if float(g @ dx) < 0.0:
                ls = dataclasses.replace(cfg.line_search_config, mu0=1.0)
                res = backtracking(lambda z: sur.value(z, sigma), g, x, dx, ls)
                mu = res.mu if res.accepted else 0.0
            else:
                mu = 0.0
        y = x + mu * dx
        x_new = sur.threshold(y, G @ y)
        _check_finite(x_new, "iterate", trace, cfg.tau)
        rec = sur.record(it, sigma, x_new, mu)
        if not np.isfinite(rec.h_value):
            raise NumericalError("non-finite objective", tau=cfg.tau, trace=trace)
        trace.append(rec)
        done = cfg.stop_tol > 0.0 and np.linalg.norm(x_new - x) <= cfg.stop_tol * (1.0 + np.linalg.norm(x))
        x = x_new
        if done:
            break
    return x, trace


def _proximal(prob, tau, max_iters, x0, accelerate, callback):
    x = prob.check_x(x0).copy()
    if not tau >= 0.0:
        raise DomainError(f"tau must be non-negative, got {tau!r}")
    s2 = landweber_scale(prob) ** 2
    G = prob.gram / s2
    atb = prob.atb / s2
    level = tau / s2
    y = x
    t = 1.0
    for k in range(max_iters):
        x_new = soft_threshold(y + atb - G @ y, level)
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"non-finite iterate at iteration {k}", tau=tau)
        if accelerate:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        else:
            y = x_new
        x = x_new
        if callback is not None:
            callback(k, x)
    return x


def ista(prob: ProblemData, tau: float, max_iters: int, x0, callback: Optional[Callable] = None) -> np.ndarray:
    """Soft-thresholded Landweber iteration for the l1 functional.

    A, b and tau are rescaled internally so that the unit step is stable;
    the minimiser is unchanged.
    """
    return _proximal(prob, tau, max_iters, x0, False, callback)


def fista(prob: ProblemData, tau: float, max_iters: int, x0, callback: Optional[Callable] = None, accelerate: bool = True) -> np.ndarray:
    """FISTA with ``t_1 = 1`` and ``y^0 = x^0``.

    ``accelerate=False`` fixes ``t_k = 1`` and reproduces :func:`ista`.
    """
    return _proximal(prob, tau, max_iters, x0, accelerate, callback)
