"""Outer loops: proximal-point regularization for mu = 0 and the proximal
augmented Lagrangian method for conic constraints.

Both drive the certified accelerated solver on a schedule rho_k = rho0 *
zeta**k of proximal weights and eta_k = eta0 * sigma**k of inner residual
targets, and terminate on a verifiable bound assembled from the last inner
certificate and the outer step length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .apg import ApgParams, Certificate, apg_terminating
from .model import (
    Array,
    CallableSmooth,
    CompositeProblem,
    ConicProblem,
    OracleCounters,
    SolveTimeout,
    instrument_composite,
    instrument_conic,
)
from .proxcone import dist_polar, normal_cone_gap, project_dual


@dataclass(frozen=True)
class OuterParams:
    """Schedule and inner-solver settings for the outer loops.

    rho0 defaults per solver when None: max(10, gamma0) for the proximal
    point loop and max(10, (mu + sqrt(mu^2 + 4))/2 + 1) for the augmented
    Lagrangian loop.
    """

    epsilon: float
    rho0: float | None = None
    zeta: float = 2.0
    sigma: float = 0.4
    eta0: float = 1.0
    gamma0: float = 1.0
    alpha0: float = 1.0
    delta: float = 0.5
    M: int = 10
    max_outer: int = 50
    max_iters: int = 1_000_000
    max_backtracks: int = 100
    warm_start_gamma: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.zeta > 1:
            raise ValueError("zeta must exceed 1")
        if not 0 < self.sigma < 1 / self.zeta:
            raise ValueError(f"sigma must satisfy 0 < sigma < 1/zeta, got {self.sigma}")
        if not 0 < self.eta0 <= 1:
            raise ValueError("eta0 must lie in (0, 1]")
        if self.max_outer < 1:
            raise ValueError("max_outer must be positive")


@dataclass(frozen=True)
class KktReport:
    """Self-validating first-order optimality witnesses for a pair (x, lam).

    stationarity_witness is an explicit element of grad f(x) + dP(x) +
    adjoint-Jacobian(x) lam; complementarity_witness lies in the normal
    cone of K* at lam up to witness_defects.
    """

    stationarity_witness: Array
    complementarity_witness: Array
    stationarity_residual: float
    complementarity_residual: float
    witness_defects: tuple[float, float]


@dataclass(frozen=True)
class OuterTraceRow:
    """One outer iteration; grad/prox_evals are cumulative over the solve."""

    k: int
    rho_k: float
    eta_k: float
    inner_iters: int
    inner_grad_evals: int
    inner_prox_evals: int
    step_norm: float
    certified_inner_residual: float
    grad_evals: int
    prox_evals: int
    certificate: Certificate
    center: Array
    x_new: Array
    residual_bound: float | None = None
    lam_prev: Array | None = None
    lam_new: Array | None = None
    kkt: KktReport | None = None
    inner_trace: "object | None" = None  # ApgTrace when iterate recording is on


@dataclass
class OuterTrace:
    rows: list[OuterTraceRow]
    counters: OracleCounters


@dataclass(frozen=True)
class PpaResult:
    x: Array
    residual_bound: float
    witness: Array
    certificate: Certificate
    rho_final: float
    center_final: Array
    trace: OuterTrace


@dataclass(frozen=True)
class ProxAlResult:
    x: Array
    lam: Array
    report: KktReport
    trace: OuterTrace


def shifted_proximal_subproblem(
    problem: CompositeProblem, center: Array, rho: float
) -> CompositeProblem:
    """f + ||x - center||^2 / (2 rho) with the same nonsmooth term.

    The quadratic shift raises the convexity modulus to mu + 1/rho.
    """
    center = np.asarray(center, dtype=float)
    smooth = problem.smooth

    def value(x):
        d = x - center
        return smooth.value(x) + float(d @ d) / (2.0 * rho)

    def gradient(x):
        return smooth.gradient(x) + (x - center) / rho

    return CompositeProblem(
        smooth=CallableSmooth(problem.dim, value, gradient),
        nonsmooth=problem.nonsmooth,
        mu=problem.mu + 1.0 / rho,
    )


def al_value(conic: ConicProblem, x, lam, rho: float) -> float:
    """Augmented Lagrangian value f(x) + P(x) + (dist(lam + rho g(x), -K)^2 - ||lam||^2) / (2 rho)."""
    lam = _require_dual(conic, lam)
    if not rho > 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=float)
    p = conic.base.nonsmooth.value(x)
    if not p < math.inf:
        return math.inf
    shifted = lam + rho * conic.constraint.value(x)
    d = dist_polar(conic.cone, shifted)
    return conic.base.smooth.value(x) + p + (d * d - float(lam @ lam)) / (2.0 * rho)


def al_smooth_gradient(conic: ConicProblem, x, lam, rho: float) -> Array:
    """Gradient of the smooth part of the augmented Lagrangian.

    grad f(x) plus the adjoint-Jacobian product with the dual projection of
    lam + rho g(x); the squared distance to a convex set is continuously
    differentiable, so no smoothness is lost.
    """
    lam = _require_dual(conic, lam)
    if not rho > 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=float)
    shifted = lam + rho * conic.constraint.value(x)
    multiplier = project_dual(conic.cone, shifted)
    return conic.base.smooth.gradient(x) + conic.constraint.adjoint_apply(x, multiplier)


def build_al_subproblem(
    conic: ConicProblem,
    center: Array,
    lam: Array,
    rho: float,
    counters: OracleCounters | None = None,
) -> CompositeProblem:
    """Proximal augmented Lagrangian subproblem as a CompositeProblem.

    Smooth part: f(x) + (dist(lam + rho g(x), -K)^2 - ||lam||^2 +
    ||x - center||^2) / (2 rho); nonsmooth part: the original P; convexity
    modulus mu + 1/rho.  When ``counters`` is given, each value/gradient
    evaluation books one cone projection (g and adjoint calls are booked by
    the constraint map itself).
    """
    center = np.asarray(center, dtype=float)
    lam = np.asarray(lam, dtype=float).copy()
    cone = conic.cone
    constraint = conic.constraint
    smooth = conic.base.smooth
    lam_sq = float(lam @ lam)

    def value(x):
        shifted = lam + rho * constraint.value(x)
        if counters is not None:
            counters.cone_proj_evals += 1
        d = dist_polar(cone, shifted)
        dx = x - center
        return smooth.value(x) + (d * d - lam_sq + float(dx @ dx)) / (2.0 * rho)

    def gradient(x):
        shifted = lam + rho * constraint.value(x)
        if counters is not None:
            counters.cone_proj_evals += 1
        multiplier = project_dual(cone, shifted)
        return smooth.gradient(x) + constraint.adjoint_apply(x, multiplier) + (x - center) / rho

    return CompositeProblem(
        smooth=CallableSmooth(conic.base.dim, value, gradient),
        nonsmooth=conic.base.nonsmooth,
        mu=conic.base.mu + 1.0 / rho,
    )


def multiplier_update(cone, lam, rho: float, gval) -> Array:
    """Projected dual ascent step: project lam + rho * gval onto K*."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    lam = np.asarray(lam, dtype=float)
    gval = np.asarray(gval, dtype=float)
    return project_dual(cone, lam + rho * gval)


def kkt_report(
    conic: ConicProblem,
    x: Array,
    lam_new: Array,
    inner_certificate: Certificate,
    rho: float,
    x_prev: Array,
    lam_prev: Array,
) -> KktReport:
    """Assemble optimality witnesses from an inner certificate and multiplier step.

    Valid only for (x, lam_new) produced by the same outer step: the
    certificate witness u lies in the subdifferential of the proximal AL
    subproblem at x, and lam_new must equal the projected update of lam_prev
    at x.  Then s = u - (x - x_prev)/rho is an explicit stationarity
    witness, and w = (lam_prev + rho g(x) - lam_new)/rho lies in the normal
    cone of K* at lam_new with ||g(x) - w|| = ||lam_new - lam_prev||/rho
    bounding the complementarity residual.
    """
    x = np.asarray(x, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    lam_new = np.asarray(lam_new, dtype=float)
    lam_prev = np.asarray(lam_prev, dtype=float)
    s = inner_certificate.witness - (x - x_prev) / rho
    gval = conic.constraint.value(x)
    w = (lam_prev + rho * gval - lam_new) / rho
    defects = normal_cone_gap(conic.cone, lam_new, w)
    w_norm = float(np.linalg.norm(w))
    if max(defects) > 1e-9 * (1.0 + w_norm):
        raise AssertionError(
            f"normal-cone witness defects {defects} exceed tolerance; the "
            "multiplier does not match the certificate's outer step"
        )
    return KktReport(
        stationarity_witness=s,
        complementarity_witness=w,
        stationarity_residual=float(np.linalg.norm(s)),
        complementarity_residual=float(np.linalg.norm(lam_new - lam_prev)) / rho,
        witness_defects=defects,
    )


def _require_dual(conic: ConicProblem, lam) -> Array:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (conic.cone.dim,):
        raise ValueError(f"lam has shape {lam.shape}, expected ({conic.cone.dim},)")
    if conic.cone.dim:
        drift = np.abs(lam - project_dual(conic.cone, lam))
        if float(np.max(drift)) > 1e-9:
            raise ValueError("lam must lie in the dual cone")
    return lam


def _inner_params(params: OuterParams, gamma0: float, eta_k: float) -> ApgParams:
    return ApgParams(
        gamma0=gamma0,
        alpha0=params.alpha0,
        delta=params.delta,
        M=params.M,
        epsilon=eta_k,
        max_iters=params.max_iters,
        max_backtracks=params.max_backtracks,
        warm_start_gamma=params.warm_start_gamma,
    )


def ppa_unconstrained(
    problem: CompositeProblem,
    params: OuterParams,
    init,
    record_iterates: bool = False,
) -> PpaResult:
    """Certified solver for mu = 0 via proximal-point perturbations.

    Each outer step minimizes f + ||x - x_k||^2/(2 rho_k) + P with the
    certified accelerated solver at target eta_k and stops once
    ||x_{k+1} - x_k||/rho_k <= epsilon/2 and eta_k <= epsilon/2, which makes
    eta_k + ||x_{k+1} - x_k||/rho_k a verified bound on dist(0, dF(x_{k+1}))
    at most epsilon.
    """
    if problem.mu != 0:
        raise ValueError("the proximal-point loop requires mu = 0")
    rho0 = params.rho0 if params.rho0 is not None else max(10.0, params.gamma0)
    if not rho0 > 1:
        raise ValueError("rho0 must exceed 1")
    if not 0 < params.gamma0 <= rho0:
        raise ValueError("gamma0 must satisfy 0 < gamma0 <= rho0")
    if not math.sqrt(params.gamma0 / rho0) <= params.alpha0 <= 1:
        raise ValueError("alpha0 must lie in [sqrt(gamma0/rho0), 1]")

    counters = OracleCounters()
    base = instrument_composite(problem, counters)
    x = np.asarray(init, dtype=float).copy()
    rows: list[OuterTraceRow] = []
    trace = OuterTrace(rows=rows, counters=counters)
    best_bound = math.inf
    best = None
    for k in range(params.max_outer):
        rho_k = rho0 * params.zeta**k
        eta_k = params.eta0 * params.sigma**k
        sub = shifted_proximal_subproblem(base, x, rho_k)
        before = counters.snapshot()
        res = apg_terminating(
            sub,
            _inner_params(params, params.gamma0, eta_k),
            x,
            counters=counters,
            record_iterates=record_iterates,
        )
        x_new = res.x
        step = float(np.linalg.norm(x_new - x))
        bound = eta_k + step / rho_k
        assert res.certificate.residual <= eta_k
        rows.append(
            OuterTraceRow(
                k=k,
                rho_k=rho_k,
                eta_k=eta_k,
                inner_iters=len(res.trace.rows),
                inner_grad_evals=counters.grad_f_evals - before.grad_f_evals,
                inner_prox_evals=counters.prox_evals - before.prox_evals,
                step_norm=step,
                certified_inner_residual=res.certificate.residual,
                grad_evals=counters.grad_f_evals,
                prox_evals=counters.prox_evals,
                certificate=res.certificate,
                center=x,
                x_new=x_new,
                residual_bound=bound,
                inner_trace=res.trace if record_iterates else None,
            )
        )
        if bound < best_bound:
            best_bound = bound
            best = (x_new, res.certificate, rho_k, x)
        if step / rho_k <= params.epsilon / 2 and eta_k <= params.epsilon / 2:
            witness = res.certificate.witness - (x_new - x) / rho_k
            return PpaResult(
                x=x_new,
                residual_bound=bound,
                witness=witness,
                certificate=res.certificate,
                rho_final=rho_k,
                center_final=x,
                trace=trace,
            )
        x = x_new
    raise SolveTimeout(
        f"outer budget of {params.max_outer} exhausted; best residual bound {best_bound}",
        best=best_bound,
        trace=trace,
    )


def prox_al(
    conic: ConicProblem,
    params: OuterParams,
    init_x,
    init_lam,
    record_iterates: bool = False,
) -> ProxAlResult:
    """First-order proximal augmented Lagrangian method with KKT certification.

    Each outer step solves the proximal AL subproblem with the certified
    accelerated solver (step base 1/rho_k, modulus mu + 1/rho_k, target
    eta_k), updates the multiplier by projected dual ascent, and stops once
    both the scaled pair step ||(x, lam) step||/rho_k and eta_k fall to
    epsilon/2; the returned report then carries stationarity and
    complementarity residuals at most epsilon.
    """
    mu = conic.base.mu
    critical = (mu + math.sqrt(mu * mu + 4.0)) / 2.0
    rho0 = params.rho0 if params.rho0 is not None else max(10.0, critical + 1.0)
    if not rho0 > critical:
        raise ValueError(
            f"rho0 must exceed (mu + sqrt(mu^2 + 4))/2 = {critical}, got {rho0}"
        )
    if not math.sqrt((mu + 1.0 / rho0) / rho0) <= params.alpha0 <= 1:
        raise ValueError("alpha0 must lie in [sqrt((mu + 1/rho0)/rho0), 1]")

    counters = OracleCounters()
    counted = instrument_conic(conic, counters)
    x = np.asarray(init_x, dtype=float).copy()
    lam = _require_dual(conic, init_lam).copy()
    rows: list[OuterTraceRow] = []
    trace = OuterTrace(rows=rows, counters=counters)
    best = None
    best_res = math.inf
    for k in range(params.max_outer):
        rho_k = rho0 * params.zeta**k
        eta_k = params.eta0 * params.sigma**k
        mu_k = mu + 1.0 / rho_k
        # step base 1/rho_k keeps mu_k * gamma0 < 1 automatically; the
        # clamp inside the inner solver must stay inactive.
        assert mu_k / rho_k <= 1.0 - 1e-9
        sub = build_al_subproblem(counted, x, lam, rho_k, counters=counters)
        before = counters.snapshot()
        res = apg_terminating(
            sub,
            _inner_params(params, 1.0 / rho_k, eta_k),
            x,
            counters=counters,
            record_iterates=record_iterates,
        )
        x_new = res.x
        gval = counted.constraint.value(x_new)
        lam_new = multiplier_update(conic.cone, lam, rho_k, gval)
        counters.cone_proj_evals += 1
        step = math.sqrt(
            float(np.linalg.norm(x_new - x)) ** 2 + float(np.linalg.norm(lam_new - lam)) ** 2
        )
        assert res.certificate.residual <= eta_k
        report = kkt_report(conic, x_new, lam_new, res.certificate, rho_k, x, lam)
        rows.append(
            OuterTraceRow(
                k=k,
                rho_k=rho_k,
                eta_k=eta_k,
                inner_iters=len(res.trace.rows),
                inner_grad_evals=counters.grad_f_evals - before.grad_f_evals,
                inner_prox_evals=counters.prox_evals - before.prox_evals,
                step_norm=step,
                certified_inner_residual=res.certificate.residual,
                grad_evals=counters.grad_f_evals,
                prox_evals=counters.prox_evals,
                certificate=res.certificate,
                center=x,
                x_new=x_new,
                lam_prev=lam,
                lam_new=lam_new,
                kkt=report,
                inner_trace=res.trace if record_iterates else None,
            )
        )
        worst = max(report.stationarity_residual, report.complementarity_residual)
        if worst < best_res:
            best_res = worst
            best = report
        if step / rho_k <= params.epsilon / 2 and eta_k <= params.epsilon / 2:
            return ProxAlResult(x=x_new, lam=lam_new, report=report, trace=trace)
        x, lam = x_new, lam_new
    raise SolveTimeout(
        f"outer budget of {params.max_outer} exhausted; best KKT residual {best_res}",
        best=best,
        trace=trace,
    )
