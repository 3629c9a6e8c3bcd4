"""Reproducible benchmark generators and a high-accuracy reference solver.

Quartic objectives f(x) = sum_j c_j (<a_j, x> - b_j)^4 / 4 + (mu/2)||x||^2
are convex with a gradient that is locally but not globally Lipschitz, which
is exactly the regime the solvers target.  All randomness comes from
numpy's PCG64 generator seeded per spec, so instances are bit-reproducible
within this package (generator name recorded as GENERATOR_NAME).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .apg import ApgParams, apg_terminating
from .model import (
    AffineConstraint,
    Array,
    CallableSmooth,
    CompositeProblem,
    ConeSpec,
    ConicProblem,
    ProxTerm,
)
from .outer import OuterParams, ppa_unconstrained
from .proxcone import ZeroTerm

GENERATOR_NAME = "numpy-pcg64"


@dataclass(frozen=True)
class QuarticSpec:
    n: int
    k_terms: int
    seed: int
    mu_add: float = 0.0
    prox: ProxTerm | None = None


@dataclass(frozen=True)
class ConstrainedSpec:
    base: QuarticSpec
    m1: int
    m2: int
    seed: int


@dataclass(frozen=True)
class QuarticOracle:
    """f(x) = sum_j coeffs_j (<rows_j, x> - offsets_j)^4 / 4 + (mu_add/2) ||x||^2."""

    coeffs: Array
    rows: Array
    offsets: Array
    mu_add: float

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def value(self, x: Array) -> float:
        r = self.rows @ x - self.offsets
        out = 0.25 * float(self.coeffs @ (r**4))
        if self.mu_add:
            out += 0.5 * self.mu_add * float(x @ x)
        return out

    def gradient(self, x: Array) -> Array:
        r = self.rows @ x - self.offsets
        grad = self.rows.T @ (self.coeffs * r**3)
        if self.mu_add:
            grad = grad + self.mu_add * x
        return grad


def quartic_from_arrays(coeffs, rows, offsets, mu_add=0.0, prox: ProxTerm | None = None) -> CompositeProblem:
    """Composite problem from explicit quartic data (no randomness)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    oracle = QuarticOracle(
        coeffs=np.asarray(coeffs, dtype=float),
        rows=rows,
        offsets=np.asarray(offsets, dtype=float),
        mu_add=float(mu_add),
    )
    term = prox if prox is not None else ZeroTerm(oracle.dim)
    return CompositeProblem(smooth=oracle, nonsmooth=term, mu=float(mu_add))


def gen_quartic(spec: QuarticSpec) -> CompositeProblem:
    """Random convex quartic composite problem, deterministic in spec.seed.

    Coefficients c_j in [0.5, 1.5], directions a_j with entries in [-1, 1],
    offsets b_j in [-1, 1]; the returned convexity modulus equals mu_add.
    """
    if spec.n < 1 or spec.k_terms < 1:
        raise ValueError("n and k_terms must be positive")
    rng = np.random.default_rng(spec.seed)
    coeffs = rng.uniform(0.5, 1.5, size=spec.k_terms)
    rows = rng.uniform(-1.0, 1.0, size=(spec.k_terms, spec.n))
    offsets = rng.uniform(-1.0, 1.0, size=spec.k_terms)
    return quartic_from_arrays(coeffs, rows, offsets, spec.mu_add, spec.prox)


@dataclass(frozen=True)
class ConstrainedInstance:
    """Generated conic problem plus the data needed by tests.

    x_feas satisfies the inequalities strictly and the equalities exactly;
    the affine pieces are exposed so adjoint products can be checked against
    explicit transposes.
    """

    conic: ConicProblem
    x_feas: Array
    ineq_matrix: Array
    ineq_rhs: Array
    eq_matrix: Array
    eq_rhs: Array


def gen_constrained(spec: ConstrainedSpec) -> ConstrainedInstance:
    """Affinely constrained quartic with a stored strictly feasible point.

    g(x) = (Bx - d; Cx - e) with K the product of a nonnegative orthant
    (size m1) and a zero cone (size m2); d and e are chosen from a sampled
    interior point so feasibility holds by construction.  Constraint rows
    are normalized to unit length, which keeps the augmented-Lagrangian
    curvature proportional to the penalty weight rather than to m * n.
    """
    base = gen_quartic(spec.base)
    n = base.dim
    rng = np.random.default_rng(spec.seed)
    B = rng.uniform(-1.0, 1.0, size=(spec.m1, n))
    C = rng.uniform(-1.0, 1.0, size=(spec.m2, n))
    if spec.m1:
        B /= np.linalg.norm(B, axis=1, keepdims=True)
    if spec.m2:
        C /= np.linalg.norm(C, axis=1, keepdims=True)
    x_feas = rng.uniform(-0.5, 0.5, size=n)
    slack = rng.uniform(0.2, 1.0, size=spec.m1)
    d = B @ x_feas + slack
    e = C @ x_feas
    matrix = np.vstack([B, C]) if spec.m1 + spec.m2 else np.zeros((0, n))
    shift = -np.concatenate([d, e])
    constraint = AffineConstraint(matrix=matrix, shift=shift)
    cone = ConeSpec.orthant_and_zero(spec.m1, spec.m2)
    conic = ConicProblem(base=base, constraint=constraint, cone=cone)
    gval = constraint.value(x_feas)
    if spec.m1 and not np.all(gval[: spec.m1] < 0):
        raise RuntimeError("generation failed: sampled point is not strictly feasible")
    if spec.m2 and not np.all(np.abs(gval[spec.m1 :]) <= 1e-12):
        raise RuntimeError("generation failed: equality residual exceeds 1e-12")
    return ConstrainedInstance(
        conic=conic, x_feas=x_feas, ineq_matrix=B, ineq_rhs=d, eq_matrix=C, eq_rhs=e
    )


def ineq_quadratic_1d() -> ConicProblem:
    """min x^2 subject to 1 - x <= 0; optimal pair is x = 1, lam = 2."""
    smooth = CallableSmooth(
        1, lambda x: float(x[0] ** 2), lambda x: np.array([2.0 * x[0]])
    )
    problem = CompositeProblem(smooth=smooth, nonsmooth=ZeroTerm(1), mu=2.0)
    constraint = AffineConstraint(matrix=np.array([[-1.0]]), shift=np.array([1.0]))
    return ConicProblem(base=problem, constraint=constraint, cone=ConeSpec.nonneg(1))


def eq_quadratic_2d() -> ConicProblem:
    """min ||x||^2/2 subject to x1 + x2 = 1; optimal pair is (0.5, 0.5), lam = -0.5."""
    smooth = CallableSmooth(2, lambda x: 0.5 * float(x @ x), lambda x: x.copy())
    problem = CompositeProblem(smooth=smooth, nonsmooth=ZeroTerm(2), mu=1.0)
    constraint = AffineConstraint(matrix=np.array([[1.0, 1.0]]), shift=np.array([-1.0]))
    return ConicProblem(base=problem, constraint=constraint, cone=ConeSpec.zeros(1))


def reference_solve(problem: CompositeProblem, tol: float) -> tuple[Array, float]:
    """High-accuracy solve used as an oracle by the test suites.

    Routes to the certified accelerated solver when mu > 0 and to the
    proximal-point loop otherwise, with generous budgets; returns the point
    and its certified residual bound (<= tol).  Budget exhaustion raises,
    since that is a failure of the test infrastructure rather than a solver
    verdict.  The backtracking warm start is used because tolerances near
    the objective's floating-point granularity destabilize a search that
    restarts from gamma0 (steps far above the local curvature bound get
    accepted once the test quantities fall below value-rounding noise).
    """
    if tol < 1e-12:
        raise ValueError("tol must be at least 1e-12")
    init = problem.nonsmooth.prox(1.0, np.zeros(problem.dim))
    if problem.mu > 0:
        params = ApgParams(
            gamma0=1.0, M=5, epsilon=tol, max_iters=2_000_000, warm_start_gamma=True
        )
        res = apg_terminating(problem, params, init, record_iterates=False)
        return res.x, res.certificate.residual
    params = OuterParams(
        epsilon=tol,
        rho0=10.0,
        zeta=2.0,
        sigma=0.25,
        eta0=1.0,
        gamma0=1.0,
        alpha0=1.0,
        delta=0.5,
        M=5,
        max_outer=80,
        max_iters=2_000_000,
        warm_start_gamma=True,
    )
    res = ppa_unconstrained(problem, params, init, record_iterates=False)
    return res.x, res.residual_bound
