"""Lasso / lp functionals and their smooth surrogates.

The surrogate is ``H(x) = ||Ax - b||^2 + 2 tau R(x)`` where ``R`` sums a
smooth approximation of |x_k| (p = 1) or is the smoothed lp quasi-norm
``G(x) = (sum phi(x_k)^p)^(1/p)`` (p < 1, ConvPhi only).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, DomainError, UnsupportedCombinationError
from .kernels import SIGMA_MIN, SmoothingKind, evaluate

__all__ = [
    "ProblemData",
    "ObjectiveSpec",
    "HessianOperator",
    "f_p_value",
    "h_value",
    "h_gradient",
    "h_hessian",
    "g_p_sigma",
    "regularizer_value",
    "regularizer_gradient",
    "regularizer_hessian",
]


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Dense linear system with cached normal-equation pieces.

    Instances are immutable; use :meth:`with_rhs` to swap the right-hand side.
    """

    A: np.ndarray
    b: np.ndarray
    truth: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _frozen(self.A)
        b = _frozen(self.b).reshape(-1)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionError(f"A must be a non-empty matrix, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise DimensionError(f"b has {b.shape[0]} entries but A has {A.shape[0]} rows")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise DomainError("A and b must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.truth is not None:
            x = _frozen(self.truth).reshape(-1)
            if x.shape[0] != A.shape[1]:
                raise DimensionError(f"truth has {x.shape[0]} entries but A has {A.shape[1]} columns")
            object.__setattr__(self, "truth", x)

    @property
    def shape(self):
        return self.A.shape

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        G = self.A.T @ self.A
        G = 0.5 * (G + G.T)
        G.setflags(write=False)
        return G

    @cached_property
    def atb(self) -> np.ndarray:
        v = self.A.T @ self.b
        v.setflags(write=False)
        return v

    @cached_property
    def tau_max(self) -> float:
        """``||A^T b||_inf``, above which the l1 minimiser is zero."""
        return float(np.max(np.abs(self.atb)))

    @cached_property
    def spectral_norm(self) -> tuple[float, bool]:
        """Power-iteration estimate of ``||A||_2`` and whether it converged."""
        return _power_norm(self.gram)

    def with_rhs(self, b, truth=None) -> "ProblemData":
        return ProblemData(self.A, b, self.truth if truth is None else truth)

    def check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"x must have shape ({self.n},), got {x.shape}")
        return x


def _power_norm(gram, iters=50, rtol=1e-12):
    n = gram.shape[0]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    converged = False
    for _ in range(iters):
        w = gram @ v
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True
        v = w / nw
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            lam = lam_new
            converged = True
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0))), converged


@dataclass(frozen=True)
class ObjectiveSpec:
    p: float
    tau: float
    sigma: float
    kind: SmoothingKind = SmoothingKind.CONV_PHI

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise DomainError(f"p must lie in (0, 1], got {self.p!r}")
        if not self.tau > 0.0:
            raise DomainError(f"tau must be positive, got {self.tau!r}")
        if not (np.isfinite(self.sigma) and self.sigma >= SIGMA_MIN):
            raise DomainError(f"sigma must be >= {SIGMA_MIN:g}, got {self.sigma!r}")
        if self.p < 1.0 and self.kind is not SmoothingKind.CONV_PHI:
            raise UnsupportedCombinationError(f"p < 1 requires the ConvPhi kind, got {self.kind.name}")


class HessianOperator:
    """Matrix-free ``2 A^T A + Diag(diag) + rank1_weight * v v^T``."""

    def __init__(self, gram, diag, rank1_vec=None, rank1_weight=0.0):
        self.gram_ref = gram
        self.diag = np.asarray(diag, dtype=float)
        self.rank1_vec = None if rank1_vec is None else np.asarray(rank1_vec, dtype=float)
        self.rank1_weight = float(rank1_weight)

    @property
    def shape(self):
        return self.gram_ref.shape

    def apply(self, s, gram_s=None):
        """Product with `s`; pass ``gram_s = A^T A s`` if already known."""
        s = np.asarray(s, dtype=float)
        if gram_s is None:
            gram_s = self.gram_ref @ s
        out = 2.0 * gram_s + self.diag * s
        if self.rank1_vec is not None and self.rank1_weight != 0.0:
            out = out + self.rank1_weight * (self.rank1_vec @ s) * self.rank1_vec
        return out

    __matmul__ = apply

    def quad(self, s) -> float:
        return float(s @ self.apply(s))

    def to_dense(self) -> np.ndarray:
        M = 2.0 * np.array(self.gram_ref) + np.diag(self.diag)
        if self.rank1_vec is not None:
            M += self.rank1_weight * np.outer(self.rank1_vec, self.rank1_vec)
        return M


def f_p_value(prob: ProblemData, x, p: float, tau: float) -> float:
    """``||Ax - b||^2 + 2 tau (sum |x_k|^p)^(1/p)``."""
    x = prob.check_x(x)
    if not p > 0.0:
        raise DomainError(f"p must be positive, got {p!r}")
    r = prob.A @ x - prob.b
    if p == 1.0:
        reg = np.abs(x).sum()
    else:
        reg = (np.abs(x) ** p).sum() ** (1.0 / p)
    return float(r @ r + 2.0 * tau * reg)


def _log_phi(x, sigma):
    """log of ConvPhi, accurate also where phi underflows."""
    phi, d1, d2 = evaluate(SmoothingKind.CONV_PHI, x, sigma)
    with np.errstate(divide="ignore"):
        logphi = np.log(phi)
    small = phi < 1e-300
    if np.any(small):
        # phi >= sqrt(2/pi) sigma > 0, so this only triggers for pathological sigma
        logphi = np.where(small, np.log(np.sqrt(2.0 / np.pi) * sigma), logphi)
    return phi, logphi, d1, d2


def g_p_sigma(x, p: float, sigma: float) -> float:
    """Smoothed lp quasi-norm ``(sum phi(x_k)^p)^(1/p)`` with ConvPhi."""
    if not p > 0.0:
        raise DomainError(f"p must be positive, got {p!r}")
    x = np.asarray(x, dtype=float)
    _, logphi, _, _ = _log_phi(x, sigma)
    if p == 1.0:
        return float(np.exp(logphi).sum())
    return float(np.exp(logsumexp(p * logphi) / p))


def regularizer_value(spec: ObjectiveSpec, x) -> float:
    if spec.p == 1.0:
        value, _, _ = evaluate(spec.kind, x, spec.sigma, order=0)
        return float(value.sum())
    return g_p_sigma(x, spec.p, spec.sigma)


def _lp_pieces(spec, x):
    p = spec.p
    phi, logphi, d1, d2 = _log_phi(x, spec.sigma)
    logS = logsumexp(p * logphi)
    # S^((1-p)/p) phi^(p-1), formed in log space
    scale = np.exp((1.0 - p) / p * logS + (p - 1.0) * logphi)
    return phi, logphi, logS, d1, d2, scale


def regularizer_gradient(spec: ObjectiveSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.p == 1.0:
        _, d1, _ = evaluate(spec.kind, x, spec.sigma, order=1)
        return d1
    _, _, _, d1, _, scale = _lp_pieces(spec, x)
    return scale * d1


def regularizer_hessian(spec: ObjectiveSpec, x):
    """Diagonal and optional rank-one vector of the regulariser Hessian.

    Returns ``(diag, v)`` such that the Hessian of ``R`` is
    ``Diag(diag) + v v^T`` (``v`` is None for p = 1).
    """
    if not spec.kind.twice_differentiable:
        raise UnsupportedCombinationError("the Huber kind has no second derivative")
    x = np.asarray(x, dtype=float)
    if spec.p == 1.0:
        _, _, d2 = evaluate(spec.kind, x, spec.sigma, order=2)
        return d2, None
    p = spec.p
    phi, logphi, logS, d1, d2, scale = _lp_pieces(spec, x)
    v = np.sqrt(1.0 - p) * np.exp((p - 1.0) * logphi + (1.0 - 2.0 * p) / (2.0 * p) * logS) * d1
    w = scale * ((p - 1.0) / phi * d1 * d1 + d2)
    return w, v


def _data_term(prob, x):
    r = prob.A @ x - prob.b
    return float(r @ r)


def h_value(prob: ProblemData, spec: ObjectiveSpec, x) -> float:
    """Smooth surrogate ``||Ax - b||^2 + 2 tau R(x)``."""
    x = prob.check_x(x)
    return _data_term(prob, x) + 2.0 * spec.tau * regularizer_value(spec, x)


def h_gradient(prob: ProblemData, spec: ObjectiveSpec, x) -> np.ndarray:
    x = prob.check_x(x)
    return 2.0 * (prob.gram @ x - prob.atb) + 2.0 * spec.tau * regularizer_gradient(spec, x)


def h_hessian(prob: ProblemData, spec: ObjectiveSpec, x) -> HessianOperator:
    x = prob.check_x(x)
    diag, v = regularizer_hessian(spec, x)
    return HessianOperator(prob.gram, 2.0 * spec.tau * diag, v, 2.0 * spec.tau if v is not None else 0.0)
