"""Problem containers, oracle protocols, and derivative-checking utilities.

Oracles are pure functions of x.  Evaluation counting lives in thin wrappers
produced by :func:`instrument_composite` / :func:`instrument_conic`, never in
the oracles themselves, so problems stay immutable and shareable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, runtime_checkable

import numpy as np

Array = np.ndarray


class LineSearchFailure(RuntimeError):
    """Backtracking exhausted its budget.

    Signals a non-convex oracle, an inconsistent gradient, or iterates
    escaping into a region of unbounded curvature.
    """


class SolveTimeout(RuntimeError):
    """Iteration budget exhausted before certification.

    Carries the best certificate / bound / report seen so far in ``best``
    and the partial trace in ``trace``.
    """

    def __init__(self, message: str, *, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = trace


@runtime_checkable
class SmoothOracle(Protocol):
    """Differentiable term: value(x) and gradient(x), both finite on dom(P)."""

    dim: int

    def value(self, x: Array) -> float: ...

    def gradient(self, x: Array) -> Array: ...


@runtime_checkable
class ProxTerm(Protocol):
    """Possibly nonsmooth term with an exactly computable proximal map.

    ``value`` may return +inf outside the domain; ``prox(gamma, z)`` is the
    unique minimizer of gamma*P(x) + 0.5*||x - z||^2 and always lands in the
    domain.
    """

    dim: int

    def value(self, x: Array) -> float: ...

    def prox(self, gamma: float, z: Array) -> Array: ...


@dataclass(frozen=True)
class CallableSmooth:
    """Smooth oracle assembled from plain callables."""

    dim: int
    value_fn: Callable[[Array], float]
    gradient_fn: Callable[[Array], Array]

    def value(self, x: Array) -> float:
        return float(self.value_fn(x))

    def gradient(self, x: Array) -> Array:
        return np.asarray(self.gradient_fn(x), dtype=float)


@dataclass(frozen=True)
class CompositeProblem:
    """min f(x) + P(x) with smooth f (convexity modulus mu >= 0) and prox-capable P."""

    smooth: SmoothOracle
    nonsmooth: ProxTerm
    mu: float = 0.0

    def __post_init__(self):
        if self.smooth.dim != self.nonsmooth.dim:
            raise ValueError(
                f"dimension mismatch: smooth dim {self.smooth.dim} != "
                f"nonsmooth dim {self.nonsmooth.dim}"
            )
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")

    @property
    def dim(self) -> int:
        return self.smooth.dim


@runtime_checkable
class ConstraintMap(Protocol):
    """Constraint map g with matrix-free adjoint Jacobian products.

    ``adjoint_apply(x, v)`` computes the action of the transposed Jacobian of
    g at x on v, i.e. the gradient of x -> <v, g(x)>.
    """

    n: int
    m: int

    def value(self, x: Array) -> Array: ...

    def adjoint_apply(self, x: Array, v: Array) -> Array: ...


@dataclass(frozen=True)
class AffineConstraint:
    """g(x) = matrix @ x + shift."""

    matrix: Array
    shift: Array

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float))
        if self.matrix.ndim != 2 or self.shift.shape != (self.matrix.shape[0],):
            raise ValueError("matrix must be (m, n) with shift of length m")

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def value(self, x: Array) -> Array:
        return self.matrix @ x + self.shift

    def adjoint_apply(self, x: Array, v: Array) -> Array:
        return self.matrix.T @ v


@dataclass(frozen=True)
class CallableConstraint:
    """Matrix-free constraint map from callables."""

    n: int
    m: int
    value_fn: Callable[[Array], Array]
    adjoint_fn: Callable[[Array, Array], Array]

    def value(self, x: Array) -> Array:
        return np.asarray(self.value_fn(x), dtype=float)

    def adjoint_apply(self, x: Array, v: Array) -> Array:
        return np.asarray(self.adjoint_fn(x, v), dtype=float)


class ConeBlock(Enum):
    NONNEG = "nonneg"
    ZERO = "zero"
    SOC = "soc"


@dataclass(frozen=True)
class ConeSpec:
    """Product cone: ordered blocks of nonnegative-orthant, zero, and second-order cones.

    Second-order blocks store the scalar coordinate first: (t, xbar) with
    ||xbar|| <= t.
    """

    blocks: tuple[tuple[ConeBlock, int], ...]

    def __post_init__(self):
        blocks = tuple((ConeBlock(kind), int(size)) for kind, size in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        for kind, size in blocks:
            if size < 1:
                raise ValueError(f"{kind.value} block size must be >= 1, got {size}")

    @property
    def dim(self) -> int:
        return sum(size for _, size in self.blocks)

    @classmethod
    def nonneg(cls, m: int) -> "ConeSpec":
        return cls(((ConeBlock.NONNEG, m),)) if m else cls(())

    @classmethod
    def zeros(cls, m: int) -> "ConeSpec":
        return cls(((ConeBlock.ZERO, m),)) if m else cls(())

    @classmethod
    def orthant_and_zero(cls, m1: int, m2: int) -> "ConeSpec":
        blocks = []
        if m1:
            blocks.append((ConeBlock.NONNEG, m1))
        if m2:
            blocks.append((ConeBlock.ZERO, m2))
        return cls(tuple(blocks))


@dataclass(frozen=True)
class ConicProblem:
    """CompositeProblem subject to -g(x) in K for a product cone K."""

    base: CompositeProblem
    constraint: ConstraintMap
    cone: ConeSpec

    def __post_init__(self):
        if self.constraint.n != self.base.dim:
            raise ValueError(
                f"constraint input dim {self.constraint.n} != problem dim {self.base.dim}"
            )
        if self.cone.dim != self.constraint.m:
            raise ValueError(
                f"cone dim {self.cone.dim} != constraint output dim {self.constraint.m}"
            )


@dataclass
class OracleCounters:
    """Evaluation tallies for one solver invocation (single writer)."""

    grad_f_evals: int = 0
    prox_evals: int = 0
    g_evals: int = 0
    adjoint_evals: int = 0
    cone_proj_evals: int = 0

    def snapshot(self) -> "OracleCounters":
        return OracleCounters(
            self.grad_f_evals,
            self.prox_evals,
            self.g_evals,
            self.adjoint_evals,
            self.cone_proj_evals,
        )


class _CountingSmooth:
    def __init__(self, inner: SmoothOracle, counters: OracleCounters):
        self._inner = inner
        self._counters = counters
        self.dim = inner.dim

    def value(self, x: Array) -> float:
        return self._inner.value(x)

    def gradient(self, x: Array) -> Array:
        self._counters.grad_f_evals += 1
        return self._inner.gradient(x)


class _CountingProx:
    def __init__(self, inner: ProxTerm, counters: OracleCounters):
        self._inner = inner
        self._counters = counters
        self.dim = inner.dim

    def value(self, x: Array) -> float:
        return self._inner.value(x)

    def prox(self, gamma: float, z: Array) -> Array:
        self._counters.prox_evals += 1
        return self._inner.prox(gamma, z)


class _CountingConstraint:
    def __init__(self, inner: ConstraintMap, counters: OracleCounters):
        self._inner = inner
        self._counters = counters
        self.n = inner.n
        self.m = inner.m

    def value(self, x: Array) -> Array:
        self._counters.g_evals += 1
        return self._inner.value(x)

    def adjoint_apply(self, x: Array, v: Array) -> Array:
        self._counters.adjoint_evals += 1
        return self._inner.adjoint_apply(x, v)


def instrument_composite(problem: CompositeProblem, counters: OracleCounters) -> CompositeProblem:
    """Wrap a problem so gradient/prox calls bump the given counters."""
    return CompositeProblem(
        smooth=_CountingSmooth(problem.smooth, counters),
        nonsmooth=_CountingProx(problem.nonsmooth, counters),
        mu=problem.mu,
    )


def instrument_conic(conic: ConicProblem, counters: OracleCounters) -> ConicProblem:
    """Wrap a conic problem so all oracle calls bump the given counters."""
    return ConicProblem(
        base=instrument_composite(conic.base, counters),
        constraint=_CountingConstraint(conic.constraint, counters),
        cone=conic.cone,
    )


def composite_value(problem: CompositeProblem, x: Array) -> float:
    """F(x) = f(x) + P(x); +inf when x is outside the domain of P."""
    p = problem.nonsmooth.value(x)
    if not p < math.inf:
        return math.inf
    return problem.smooth.value(x) + p


def check_gradient(oracle: SmoothOracle, x: Array, h: float) -> float:
    """Max relative mismatch between the gradient and central differences.

    Returns max_i |cd_i - g_i| / (1 + |g_i|) with cd the central difference
    of ``oracle.value`` at step h.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if not 0 < h <= 1e-2:
        raise ValueError(f"h must lie in (0, 1e-2], got {h}")
    grad = np.asarray(oracle.gradient(x), dtype=float)
    if grad.shape != x.shape:
        raise ValueError(f"gradient shape {grad.shape} != point shape {x.shape}")
    worst = 0.0
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        fp = oracle.value(x + step)
        fm = oracle.value(x - step)
        if not (np.isfinite(fp) and np.isfinite(fm) and np.isfinite(grad[i])):
            raise ValueError(f"non-finite oracle output at coordinate {i}")
        cd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(cd - grad[i]) / (1.0 + abs(grad[i])))
    return worst
