"""Step-size rules along a search direction."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DegenerateCurvatureError, DomainError, NumericalError

__all__ = [
    "LineSearchMethod",
    "LineSearchConfig",
    "BacktrackingResult",
    "backtracking",
    "taylor_hessian_step",
    "secant_fd_step",
    "fd_probe_width",
]

TINY = 1e-300


class LineSearchMethod(enum.Enum):
    BACKTRACKING = "backtracking"
    TAYLOR_HESSIAN = "taylor"
    SECANT_FD = "secant"


@dataclass(frozen=True)
class LineSearchConfig:
    method: LineSearchMethod = LineSearchMethod.TAYLOR_HESSIAN
    mu0: float = 1.0
    rho: float = 0.5
    c: float = 1e-4
    xi_scale: float = 1e-3
    max_shrinks: int = 60

    def __post_init__(self):
        if not self.mu0 > 0.0:
            raise DomainError(f"mu0 must be positive, got {self.mu0!r}")
        if not 0.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho!r}")
        if not 0.0 < self.c < 1.0:
            raise DomainError(f"c must lie in (0, 1), got {self.c!r}")
        if not self.xi_scale > 0.0:
            raise DomainError(f"xi_scale must be positive, got {self.xi_scale!r}")
        if self.max_shrinks < 0:
            raise DomainError(f"max_shrinks must be non-negative, got {self.max_shrinks!r}")


class BacktrackingResult(NamedTuple):
    mu: float
    accepted: bool
    shrinks: int


def backtracking(value_fn: Callable[[np.ndarray], float], grad, x, s, cfg: LineSearchConfig = LineSearchConfig()):
    """Armijo backtracking.

    Starting from ``cfg.mu0`` the step is multiplied by ``cfg.rho`` until
    ``f(x + mu s) <= f(x) + c mu grad^T s``.

    Returns
    -------
    BacktrackingResult
        The step, whether it satisfied the Armijo test and the number of
        shrinks.  If `max_shrinks` is exhausted the last step tried is
        returned with ``accepted=False``.
    """
    f0 = float(value_fn(x))
    if not np.isfinite(f0):
        raise NumericalError(f"non-finite objective {f0!r} at the line-search origin")
    slope = float(np.dot(grad, s))
    mu = cfg.mu0
    for k in range(cfg.max_shrinks + 1):
        f = float(value_fn(x + mu * s))
        if not np.isfinite(f):
            raise NumericalError(f"non-finite objective {f!r} at step {mu!r}")
        if f <= f0 + cfg.c * mu * slope:
            return BacktrackingResult(mu, True, k)
        if k < cfg.max_shrinks:
            mu *= cfg.rho
    return BacktrackingResult(mu, False, cfg.max_shrinks)


def taylor_hessian_step(grad, hess, s, hess_s=None) -> float:
    """Minimiser of the quadratic model, ``-grad^T s / s^T H s``.

    `hess` is anything with an ``apply`` method or a dense matrix.
    `hess_s` may carry a precomputed product ``H s``.
    """
    if hess_s is None:
        hess_s = hess.apply(s) if hasattr(hess, "apply") else np.asarray(hess) @ s
    curv = float(np.dot(s, hess_s))
    if not np.isfinite(curv):
        raise NumericalError(f"non-finite curvature {curv!r}")
    if abs(curv) < TINY:
        raise DegenerateCurvatureError(f"curvature s^T H s = {curv!r} is too small")
    return -float(np.dot(grad, s)) / curv


def secant_fd_step(grad_fn: Callable[[np.ndarray], np.ndarray], x, s, xi: float, grad=None) -> float:
    """Step from a central difference of the gradient along `s`.

    ``mu = -2 xi grad(x)^T s / (grad(x + xi s) - grad(x - xi s))^T s``.
    """
    if not xi > 0.0:
        raise DomainError(f"xi must be positive, got {xi!r}")
    g = grad_fn(x) if grad is None else grad
    denom = float(np.dot(grad_fn(x + xi * s) - grad_fn(x - xi * s), s))
    if not np.isfinite(denom):
        raise NumericalError(f"non-finite secant denominator {denom!r}")
    if abs(denom) < TINY:
        raise DegenerateCurvatureError(f"secant denominator {denom!r} is too small")
    return -2.0 * xi * float(np.dot(g, s)) / denom


def fd_probe_width(x, xi_scale: float = 1e-3) -> float:
    """Probe width ``xi_scale * (1 + ||x|| / sqrt(n))``."""
    x = np.asarray(x, dtype=float)
    return xi_scale * (1.0 + np.linalg.norm(x) / np.sqrt(max(x.size, 1)))
