"""Gaussian kernel, error function and smooth approximations to |t|.

Every approximation is evaluated through :func:`evaluate`, which works on
arrays and returns the value together with the first and second
derivative.  :func:`smooth_abs` is the scalar convenience wrapper.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from .errors import DomainError, ResolutionError

__all__ = [
    "SmoothingKind",
    "ScalarJet",
    "SIGMA_MIN",
    "TAIL_CUTOFF",
    "erf",
    "gauss_kernel",
    "evaluate",
    "smooth_abs",
    "l1_distance_quadrature",
]

SQRT2 = np.sqrt(2.0)
SQRTPI = np.sqrt(np.pi)
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

SIGMA_MIN = 1e-12
# beyond |t|/sigma = 8 the Gaussian term of phi is below 1e-14 relative
TAIL_CUTOFF = 8.0


class SmoothingKind(enum.Enum):
    """Smooth approximation of |t| used by the regulariser."""

    CONV_PHI = "conv-phi"
    CONV_PHI_SHIFTED = "conv-phi-shifted"
    CONV_PHI_HAT = "conv-phi-hat"
    CONV_PHI_GAUSS_SHIFT = "conv-phi-gauss-shift"
    SQRT_EPS = "sqrt-eps"
    HUBER = "huber"

    @property
    def twice_differentiable(self) -> bool:
        return self is not SmoothingKind.HUBER


class ScalarJet(NamedTuple):
    value: float
    d1: float
    d2: Optional[float]


def _check_sigma(sigma):
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < SIGMA_MIN:
        raise DomainError(f"sigma must be a finite number >= {SIGMA_MIN:g}, got {sigma!r}")
    return sigma


def erf(t):
    """Error function, odd and strictly increasing with |erf(t)| < 1 for finite t."""
    return special.erf(t)


def gauss_kernel(t, sigma):
    """Normalised Gaussian density with standard deviation `sigma`."""
    sigma = _check_sigma(sigma)
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * (t / sigma) ** 2) / (np.sqrt(2.0 * np.pi) * sigma)
    return out[()] if out.ndim == 0 else out


def _conv_parts(a, sigma):
    """erf, Gaussian factor and the tail mask for a = |t| >= 0."""
    u = a / (SQRT2 * sigma)
    tail = a > TAIL_CUTOFF * sigma
    E = np.where(tail, 1.0, special.erf(u))
    e = np.where(tail, 0.0, np.exp(-u * u))
    return E, e, tail


def evaluate(kind: SmoothingKind, t, sigma, order: int = 2):
    """Evaluate a smooth approximation to |t| and its derivatives.

    Parameters
    ----------
    kind : SmoothingKind
        Which approximation to use.
    t : array_like
        Evaluation points.
    sigma : float
        Smoothing width, at least ``SIGMA_MIN``.
    order : int
        Highest derivative wanted (0, 1 or 2).

    Returns
    -------
    value, d1, d2 : ndarray or None
        Arrays shaped like `t`.  Derivatives above `order` are None, and
        d2 is always None for the Huber kind.

    Notes
    -----
    Values are computed from |t| and the odd derivative is multiplied by
    sign(t) afterwards, so evenness and oddness hold bit for bit.
    """
    sigma = _check_sigma(sigma)
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    sgn = np.sign(t)
    d1 = d2 = None

    if kind is SmoothingKind.SQRT_EPS:
        r = np.hypot(a, sigma)
        value = r
        if order >= 1:
            d1 = t / r
        if order >= 2:
            d2 = sigma * sigma / r**3
        return value, d1, d2

    if kind is SmoothingKind.HUBER:
        inner = a <= sigma
        value = np.where(inner, a * a / (2.0 * sigma), a - 0.5 * sigma)
        if order >= 1:
            d1 = np.where(inner, t / sigma, sgn)
        return value, d1, None

    E, e, tail = _conv_parts(a, sigma)
    c0 = SQRT_2_OVER_PI * sigma
    k2 = SQRT2 / (sigma * SQRTPI)

    if kind is SmoothingKind.CONV_PHI_HAT:
        value = np.where(tail, a, a * E)
        if order >= 1:
            d1 = sgn * (E + a * k2 * e)
        if order >= 2:
            d2 = 2.0 * k2 * e - a * a * k2 / (sigma * sigma) * e
        return value, d1, d2

    # |t| plus the gap c0*e - |t|*erfc(u); the gap is positive, and writing
    # it this way avoids the cancellation of |t|*erf(u) against |t|
    gap = np.maximum(c0 * e - a * np.where(tail, 0.0, special.erfc(a / (SQRT2 * sigma))), 0.0)
    value = np.where(tail, a, a + gap)
    if order >= 1:
        d1 = sgn * E
    if order >= 2:
        d2 = k2 * e

    if kind is SmoothingKind.CONV_PHI:
        return value, d1, d2
    if kind is SmoothingKind.CONV_PHI_SHIFTED:
        return value - c0, d1, d2
    if kind is SmoothingKind.CONV_PHI_GAUSS_SHIFT:
        # the subtracted bump exp(-t^2) is not scaled with sigma
        g = np.exp(-a * a)
        value = value - c0 * g
        if order >= 1:
            d1 = d1 + 2.0 * c0 * t * g
        if order >= 2:
            d2 = d2 + c0 * (2.0 - 4.0 * a * a) * g
        return value, d1, d2
    raise DomainError(f"unknown smoothing kind {kind!r}")


def smooth_abs(kind: SmoothingKind, t: float, sigma: float) -> ScalarJet:
    """Scalar value, first and second derivative of the chosen approximation."""
    t = float(t)
    if not np.isfinite(t):
        raise DomainError(f"t must be finite, got {t!r}")
    value, d1, d2 = evaluate(kind, t, sigma, order=2)
    return ScalarJet(float(value), float(d1), None if d2 is None else float(d2))


def l1_distance_quadrature(kind: SmoothingKind, sigma: float, halfwidth: float, nodes: int = 100_001) -> float:
    """Composite Simpson estimate of the L1 distance between an approximation and |t|.

    The integral runs over ``[-halfwidth, halfwidth]``.  All approximations
    are even, so the rule is applied on ``[0, halfwidth]`` and doubled; this
    keeps the kink of |t| at a panel boundary.

    Raises
    ------
    DomainError
        If `sigma` is invalid or ``halfwidth < 10 * sigma``.
    ResolutionError
        If fewer than 1000 nodes are requested.
    """
    sigma = _check_sigma(sigma)
    if nodes < 1000:
        raise ResolutionError(f"need at least 1000 quadrature nodes, got {nodes}")
    if not halfwidth >= 10.0 * sigma:
        raise DomainError(f"halfwidth {halfwidth!r} must be at least 10*sigma = {10.0 * sigma!r}")
    panels = nodes // 2
    panels += panels % 2
    t = np.linspace(0.0, halfwidth, panels + 1)
    value, _, _ = evaluate(kind, t, sigma, order=0)
    f = np.abs(value - t)
    h = halfwidth / panels
    s = f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum()
    return float(2.0 * s * h / 3.0)
