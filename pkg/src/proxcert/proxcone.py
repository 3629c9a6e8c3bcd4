"""Closed-form proximal operators and product-cone projections.

All functions here are stateless and safe for concurrent use.  Projections
follow the Moreau decomposition: for any u, u = project_dual(u) +
project_polar(u) with the two parts orthogonal; project_polar maps onto -K
and project_dual onto the dual cone K*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Array, ConeBlock, ConeSpec

# Slack for indicator-domain membership: absorbs last-ulp rounding when
# convex combinations of in-domain points are formed in binary64.
_EDGE = 16.0 * np.finfo(float).eps


def _as_vector(z, dim: int, name: str) -> Array:
    z = np.asarray(z, dtype=float)
    if z.shape != (dim,):
        raise ValueError(f"{name} has shape {z.shape}, expected ({dim},)")
    return z


def _check_gamma(gamma: float) -> float:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return float(gamma)


@dataclass(frozen=True)
class ZeroTerm:
    """P = 0; prox is the identity."""

    dim: int

    def value(self, x: Array) -> float:
        return 0.0

    def prox(self, gamma: float, z: Array) -> Array:
        _check_gamma(gamma)
        return _as_vector(z, self.dim, "z").copy()


@dataclass(frozen=True)
class L1Term:
    """P = weight * ||x||_1; prox is componentwise soft thresholding."""

    dim: int
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("weight must be positive")

    def value(self, x: Array) -> float:
        return self.weight * float(np.sum(np.abs(x)))

    def prox(self, gamma: float, z: Array) -> Array:
        gamma = _check_gamma(gamma)
        z = _as_vector(z, self.dim, "z")
        t = gamma * self.weight
        return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@dataclass(frozen=True)
class BoxTerm:
    """Indicator of the box [lower, upper]; prox clips, independent of gamma."""

    lower: Array
    upper: Array

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower/upper must be 1-d arrays of equal length")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def value(self, x: Array) -> float:
        x = _as_vector(x, self.dim, "x")
        slack_lo = _EDGE * (1.0 + np.abs(self.lower))
        slack_hi = _EDGE * (1.0 + np.abs(self.upper))
        inside = np.all(x >= self.lower - slack_lo) and np.all(x <= self.upper + slack_hi)
        return 0.0 if inside else np.inf

    def prox(self, gamma: float, z: Array) -> Array:
        _check_gamma(gamma)
        z = _as_vector(z, self.dim, "z")
        return np.clip(z, self.lower, self.upper)


@dataclass(frozen=True)
class NonnegativeTerm:
    """Indicator of the nonnegative orthant; prox is the positive part."""

    dim: int

    def value(self, x: Array) -> float:
        x = _as_vector(x, self.dim, "x")
        return 0.0 if np.all(x >= -_EDGE * (1.0 + np.abs(x))) else np.inf

    def prox(self, gamma: float, z: Array) -> Array:
        _check_gamma(gamma)
        z = _as_vector(z, self.dim, "z")
        return np.maximum(z, 0.0)


@dataclass(frozen=True)
class SquaredL2Term:
    """P = (coef/2) * ||x - center||^2 with closed-form prox."""

    coef: float
    center: Array

    def __post_init__(self):
        if not self.coef > 0:
            raise ValueError("coef must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def dim(self) -> int:
        return self.center.size

    def value(self, x: Array) -> float:
        x = _as_vector(x, self.dim, "x")
        d = x - self.center
        return 0.5 * self.coef * float(d @ d)

    def prox(self, gamma: float, z: Array) -> Array:
        gamma = _check_gamma(gamma)
        z = _as_vector(z, self.dim, "z")
        t = gamma * self.coef
        return (z + t * self.center) / (1.0 + t)


def project_second_order(u: Array) -> Array:
    """Projection onto {(t, xbar) : ||xbar|| <= t}, scalar coordinate first."""
    t = u[0]
    tail = u[1:]
    r = float(np.linalg.norm(tail))
    if r <= t:
        return u.copy()
    if r <= -t:
        return np.zeros_like(u)
    out = np.empty_like(u)
    s = 0.5 * (t + r)
    out[0] = s
    out[1:] = (s / r) * tail
    return out


def project_polar(cone: ConeSpec, u) -> Array:
    """Euclidean projection onto -K, blockwise."""
    u = _as_vector(u, cone.dim, "u")
    out = np.empty_like(u)
    start = 0
    for kind, size in cone.blocks:
        stop = start + size
        block = u[start:stop]
        if kind is ConeBlock.NONNEG:
            out[start:stop] = np.minimum(block, 0.0)
        elif kind is ConeBlock.ZERO:
            out[start:stop] = 0.0
        else:  # SOC is self-dual, so -K projection is the negated projection of -u
            out[start:stop] = -project_second_order(-block)
        start = stop
    return out


def project_dual(cone: ConeSpec, u) -> Array:
    """Euclidean projection onto the dual cone K* (Moreau complement of -K)."""
    u = _as_vector(u, cone.dim, "u")
    return u - project_polar(cone, u)


def dist_polar(cone: ConeSpec, u) -> float:
    """Distance from u to -K, equal to ||project_dual(cone, u)||."""
    return float(np.linalg.norm(project_dual(cone, u)))


def normal_cone_gap(cone: ConeSpec, lam, w) -> tuple[float, float]:
    """Defects of w as a normal-cone element at lam in K*.

    Returns (membership_defect, complementarity_defect) where the first is
    dist(w, -K) and the second is |<w, lam>|.  Both vanish exactly when w
    lies in the normal cone of K* at lam.  Requires lam in K* to 1e-9 per
    coordinate.
    """
    lam = _as_vector(lam, cone.dim, "lam")
    w = _as_vector(w, cone.dim, "w")
    drift = np.abs(lam - project_dual(cone, lam))
    if cone.dim and float(np.max(drift)) > 1e-9:
        raise ValueError(
            f"lam is not in the dual cone (max coordinate drift {float(np.max(drift)):.3e})"
        )
    membership = dist_polar(cone, w)
    complementarity = abs(float(lam @ w))
    return membership, complementarity
