"""Accelerated proximal gradient methods with backtracking and residual certificates.

The iteration keeps an extrapolation triple (x, z, derived y) and per step
backtracks the curvature proxy gamma_t = gamma0 * delta**n_t until a local
quadratic upper bound holds, so only local Lipschitz continuity of the
gradient is needed.  Termination is certified by an explicit subgradient
witness whose norm upper-bounds dist(0, dF(x)) and which any independent
checker can recompute from the stored data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    Array,
    CompositeProblem,
    LineSearchFailure,
    OracleCounters,
    SolveTimeout,
    composite_value,
    instrument_composite,
)

# Line-search acceptance slack: analytic equality cases (e.g. exact
# quadratics at gamma = 1/L) must accept deterministically in binary64.
# The absolute part scales with the magnitudes entering the value
# difference; a fixed absolute slack would admit curvature violations of
# that size on every step, a leak that keeps tiny-step solves (step base
# 1/rho in the augmented Lagrangian loop) orbiting above their target.
_ACCEPT_REL = 1e-12
_ACCEPT_EPS = 8.0 * np.finfo(float).eps

# Margin keeping the y-update denominator 1 - mu*gamma away from zero.
_GAMMA_MARGIN = 1e-9


def accepts_curvature_bound(lhs: float, rhs: float, gamma: float, value_scale: float) -> bool:
    """Line-search acceptance test with rounding slack.

    ``value_scale`` is the sum of magnitudes whose rounding limits how
    accurately the Bregman difference in ``lhs`` can be evaluated.
    """
    return lhs <= rhs * (1.0 + _ACCEPT_REL) + _ACCEPT_EPS * gamma * value_scale


@dataclass(frozen=True)
class ApgParams:
    """Tuning knobs shared by the accelerated solvers.

    gamma0 is the backtracking restart value (clamped to keep mu*gamma0 < 1
    when mu > 0); alpha0 the initial extrapolation weight; delta the
    backtracking shrink factor; M the certificate cadence; epsilon the target
    residual for the certified solver.
    """

    gamma0: float = 1.0
    alpha0: float = 1.0
    delta: float = 0.5
    M: int = 10
    epsilon: float | None = None
    max_iters: int = 1_000_000
    max_backtracks: int = 100
    warm_start_gamma: bool = False

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not 0 < self.alpha0 <= 1:
            raise ValueError("alpha0 must lie in (0, 1]")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.M < 1:
            raise ValueError("M must be a positive integer")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1 or self.max_backtracks < 1:
            raise ValueError("iteration budgets must be positive")

    def effective(self, mu: float) -> tuple[float, float]:
        """Resolve (gamma0, alpha0) for a problem with convexity modulus mu."""
        gamma0 = self.gamma0
        if mu > 0:
            gamma0 = min(gamma0, (1.0 - _GAMMA_MARGIN) / mu)
        lower = math.sqrt(mu * gamma0)
        if self.alpha0 < lower - 1e-12:
            raise ValueError(
                f"alpha0 = {self.alpha0} is below sqrt(mu*gamma0) = {lower}"
            )
        return gamma0, min(1.0, max(self.alpha0, lower))


@dataclass(frozen=True)
class ApgState:
    """Iterate pair (x, z) plus the previous step scalars driving the recursion."""

    t: int
    x: Array
    z: Array
    alpha_prev: float
    gamma_prev: float
    lambda_prod: float = 1.0  # running product of (1 - alpha_i), diagnostic


@dataclass(frozen=True)
class StepReport:
    """Outcome of one accepted iteration."""

    n_t: int
    gamma_t: float
    alpha_t: float
    beta_t: float
    y: Array
    F_new: float


@dataclass(frozen=True)
class Certificate:
    """Explicit subgradient witness u in dF(x_tilde) with residual = ||u||.

    Recomputable from the stored data:
    x_tilde = prox(gamma_tilde, x_pre - gamma_tilde * grad f(x_pre)) and
    u = (x_pre - x_tilde)/gamma_tilde + grad f(x_tilde) - grad f(x_pre).
    """

    x_pre: Array
    x_tilde: Array
    gamma_tilde: float
    witness: Array
    residual: float


@dataclass(frozen=True)
class TrialStep:
    """One backtracking trial at a fixed gamma."""

    gamma: float
    alpha: float
    beta: float
    y: Array
    z_new: Array
    x_new: Array
    f_new: float
    lhs: float
    rhs: float
    accepted: bool


@dataclass(frozen=True)
class TraceRow:
    """Per-iteration record; vectors are None when iterate recording is off."""

    t: int
    n_t: int
    gamma_t: float
    alpha_t: float
    beta_t: float
    F: float
    lambda_prod: float
    grad_evals: int
    prox_evals: int
    cert_residual: float | None = None
    certificate: Certificate | None = None
    cert_backtracks: int | None = None
    x_before: Array | None = None
    z_before: Array | None = None
    alpha_before: float | None = None
    gamma_before: float | None = None


@dataclass
class ApgTrace:
    """Full record of one accelerated-solver invocation."""

    rows: list[TraceRow]
    counters: OracleCounters
    x_init: Array
    F_init: float
    gamma0: float
    alpha0: float
    mu: float
    final_state: ApgState | None = None


@dataclass(frozen=True)
class TerminatingResult:
    x: Array
    certificate: Certificate
    trace: ApgTrace


def solve_alpha(gamma_prev: float, gamma_t: float, alpha_prev: float, mu: float) -> float:
    """Root in (0, 1] of gamma_prev*a^2 = (1-a)*alpha_prev^2*gamma_t + mu*a*gamma_t*gamma_prev.

    Uses the cancellation-safe q-form of the quadratic formula and picks the
    positive root (unique, and <= 1 whenever mu*gamma_t <= 1).
    """
    if not (gamma_prev > 0 and gamma_t > 0):
        raise ValueError("step sizes must be positive")
    if not 0 < alpha_prev <= 1:
        raise ValueError("alpha_prev must lie in (0, 1]")
    a = gamma_prev
    b = alpha_prev * alpha_prev * gamma_t - mu * gamma_t * gamma_prev
    c = -(alpha_prev * alpha_prev) * gamma_t
    if b == 0.0:
        root = math.sqrt(-c / a)
    else:
        q = -0.5 * (b + math.copysign(math.sqrt(b * b - 4.0 * a * c), b))
        r1 = q / a
        root = r1 if r1 > 0 else c / q
    if not 0.0 < root <= 1.0 + 1e-12:
        raise AssertionError(
            f"alpha recursion produced root {root} outside (0, 1]; "
            "check mu*gamma <= 1"
        )
    root = min(root, 1.0)
    residual = a * root * root - (1.0 - root) * alpha_prev * alpha_prev * gamma_t \
        - mu * root * gamma_t * gamma_prev
    scale = max(a, alpha_prev * alpha_prev * gamma_t, mu * gamma_t * gamma_prev)
    if abs(residual) > 1e-10 * scale:
        raise AssertionError(f"alpha recursion residual {residual} exceeds tolerance")
    return root


def trial_step(
    problem: CompositeProblem,
    x: Array,
    z: Array,
    alpha_prev: float,
    gamma_prev: float,
    gamma: float,
) -> TrialStep:
    """Evaluate one accelerated step at a fixed gamma and test the curvature bound.

    Costs exactly one gradient and one prox evaluation.
    """
    mu = problem.mu
    alpha = solve_alpha(gamma_prev, gamma, alpha_prev, mu)
    beta = mu * gamma / alpha
    y = ((1.0 - alpha) * x + alpha * (1.0 - beta) * z) / (1.0 - alpha * beta)
    grad_y = problem.smooth.gradient(y)
    step = gamma / alpha
    z_new = problem.nonsmooth.prox(step, beta * y + (1.0 - beta) * z - step * grad_y)
    x_new = (1.0 - alpha) * x + alpha * z_new
    f_new = problem.smooth.value(x_new)
    f_y = problem.smooth.value(y)
    diff = x_new - y
    cross = float(grad_y @ diff)
    lhs = 2.0 * gamma * (f_new - f_y - cross)
    rhs = float(diff @ diff)
    scale = abs(f_new) + abs(f_y) + abs(cross)
    return TrialStep(
        gamma=gamma,
        alpha=alpha,
        beta=beta,
        y=y,
        z_new=z_new,
        x_new=x_new,
        f_new=f_new,
        lhs=lhs,
        rhs=rhs,
        accepted=accepts_curvature_bound(lhs, rhs, gamma, scale),
    )


def initial_state(problem: CompositeProblem, params: ApgParams, init) -> ApgState:
    gamma0, alpha0 = params.effective(problem.mu)
    x = np.asarray(init, dtype=float).copy()
    if x.shape != (problem.dim,):
        raise ValueError(f"init has shape {x.shape}, expected ({problem.dim},)")
    if not problem.nonsmooth.value(x) < math.inf:
        raise ValueError("init must lie in the domain of the nonsmooth term")
    return ApgState(
        t=1, x=x, z=x.copy(), alpha_prev=alpha0, gamma_prev=gamma0, lambda_prod=1.0
    )


def apg_iteration(
    problem: CompositeProblem, state: ApgState, params: ApgParams
) -> tuple[ApgState, StepReport]:
    """One accelerated iteration with backtracking; returns the new state and report.

    Tries gamma = base * delta**n for n = 0, 1, ... and accepts the first n
    satisfying the local curvature bound; each trial costs one gradient and
    one prox evaluation.
    """
    gamma0, _ = params.effective(problem.mu)
    base = state.gamma_prev if params.warm_start_gamma else gamma0
    for n in range(params.max_backtracks + 1):
        gamma = base * params.delta**n
        trial = trial_step(problem, state.x, state.z, state.alpha_prev, state.gamma_prev, gamma)
        if trial.accepted:
            new_state = ApgState(
                t=state.t + 1,
                x=trial.x_new,
                z=trial.z_new,
                alpha_prev=trial.alpha,
                gamma_prev=trial.gamma,
                lambda_prod=state.lambda_prod * (1.0 - trial.alpha),
            )
            report = StepReport(
                n_t=n,
                gamma_t=trial.gamma,
                alpha_t=trial.alpha,
                beta_t=trial.beta,
                y=trial.y,
                F_new=trial.f_new + problem.nonsmooth.value(trial.x_new),
            )
            return new_state, report
    raise LineSearchFailure(
        f"line search failed after {params.max_backtracks + 1} trials at iteration "
        f"{state.t}; the smooth term may be non-convex, its gradient inconsistent, "
        "or the iterates may have escaped to a region of unbounded curvature"
    )


def _probe(problem: CompositeProblem, v) -> tuple[Array, Array, float]:
    v = np.asarray(v, dtype=float)
    if not problem.nonsmooth.value(v) < math.inf:
        raise ValueError("v must lie in the domain of the nonsmooth term")
    return v, problem.smooth.gradient(v), problem.smooth.value(v)


def _adaptive_core(problem, v, grad_v, f_v, gamma_start, delta, max_backtracks):
    for n in range(max_backtracks + 1):
        gamma = gamma_start * delta**n
        cand = problem.nonsmooth.prox(gamma, v - gamma * grad_v)
        diff = cand - v
        f_cand = problem.smooth.value(cand)
        cross = float(grad_v @ diff)
        lhs = 2.0 * gamma * (f_cand - f_v - cross)
        rhs = float(diff @ diff)
        if accepts_curvature_bound(lhs, rhs, gamma, abs(f_cand) + abs(f_v) + abs(cross)):
            return cand, gamma, n
    raise LineSearchFailure(
        f"line search failed after {max_backtracks + 1} proximal-gradient trials"
    )


def adaptive_pg(
    problem: CompositeProblem,
    v: Array,
    gamma_start: float,
    delta: float,
    max_backtracks: int = 100,
) -> tuple[Array, float, int]:
    """Single backtracked proximal-gradient step from v.

    Returns (x_tilde, gamma_tilde, n_tilde) where gamma_tilde =
    gamma_start * delta**n_tilde is the first step size whose candidate
    satisfies the local curvature bound.  Costs one gradient and
    n_tilde + 1 prox evaluations.
    """
    v, grad_v, f_v = _probe(problem, v)
    return _adaptive_core(problem, v, grad_v, f_v, gamma_start, delta, max_backtracks)


def residual_certificate(
    problem: CompositeProblem,
    x_pre: Array,
    x_tilde: Array,
    gamma_tilde: float,
    grad_pre: Array | None = None,
) -> Certificate:
    """Build the subgradient witness for a backtracked proximal-gradient step.

    With x_tilde = prox(gamma_tilde, x_pre - gamma_tilde * grad f(x_pre)),
    u = (x_pre - x_tilde)/gamma_tilde + grad f(x_tilde) - grad f(x_pre)
    lies in dF(x_tilde), so ||u|| bounds dist(0, dF(x_tilde)) from above.
    ``grad_pre`` may pass a cached gradient at x_pre.
    """
    x_pre = np.asarray(x_pre, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    if grad_pre is None:
        grad_pre = problem.smooth.gradient(x_pre)
    witness = (x_pre - x_tilde) / gamma_tilde + problem.smooth.gradient(x_tilde) - grad_pre
    return Certificate(
        x_pre=x_pre,
        x_tilde=x_tilde,
        gamma_tilde=gamma_tilde,
        witness=witness,
        residual=float(np.linalg.norm(witness)),
    )


def certified_prox_step(
    problem: CompositeProblem,
    v: Array,
    gamma_start: float,
    delta: float,
    max_backtracks: int = 100,
) -> tuple[Certificate, int]:
    """Backtracked proximal-gradient step plus its residual certificate.

    Equivalent to ``adaptive_pg`` followed by ``residual_certificate`` but
    sharing the gradient at v, so one check costs exactly two gradient and
    n_tilde + 1 prox evaluations.
    """
    v, grad_v, f_v = _probe(problem, v)
    cand, gamma, n = _adaptive_core(problem, v, grad_v, f_v, gamma_start, delta, max_backtracks)
    return residual_certificate(problem, v, cand, gamma, grad_pre=grad_v), n


def _make_row(
    state_before: ApgState,
    state_after: ApgState,
    report: StepReport,
    counters: OracleCounters,
    record_iterates: bool,
) -> TraceRow:
    return TraceRow(
        t=state_before.t,
        n_t=report.n_t,
        gamma_t=report.gamma_t,
        alpha_t=report.alpha_t,
        beta_t=report.beta_t,
        F=report.F_new,
        lambda_prod=state_after.lambda_prod,
        grad_evals=counters.grad_f_evals,
        prox_evals=counters.prox_evals,
        x_before=state_before.x if record_iterates else None,
        z_before=state_before.z if record_iterates else None,
        alpha_before=state_before.alpha_prev,
        gamma_before=state_before.gamma_prev,
    )


def _prepare(problem, params, init, counters):
    gamma0, alpha0 = params.effective(problem.mu)
    if counters is None:
        counters = OracleCounters()
        problem = instrument_composite(problem, counters)
    state = initial_state(problem, params, init)
    trace = ApgTrace(
        rows=[],
        counters=counters,
        x_init=state.x.copy(),
        F_init=composite_value(problem, state.x),
        gamma0=gamma0,
        alpha0=alpha0,
        mu=problem.mu,
    )
    return problem, state, trace


def apg_run(
    problem: CompositeProblem,
    params: ApgParams,
    init,
    stop=None,
    counters: OracleCounters | None = None,
    record_iterates: bool = True,
) -> ApgTrace:
    """Run the accelerated iteration without a termination criterion.

    Iterates from x1 = z1 = init until ``stop(state, report)`` returns true
    or ``params.max_iters`` iterations have been taken; returns the trace.
    When ``counters`` is supplied the problem is assumed to be already
    instrumented against it.
    """
    problem, state, trace = _prepare(problem, params, init, counters)
    while state.t <= params.max_iters:
        new_state, report = apg_iteration(problem, state, params)
        trace.rows.append(_make_row(state, new_state, report, trace.counters, record_iterates))
        state = new_state
        if stop is not None and stop(state, report):
            break
    trace.final_state = state
    return trace


def apg_terminating(
    problem: CompositeProblem,
    params: ApgParams,
    init,
    counters: OracleCounters | None = None,
    record_iterates: bool = True,
) -> TerminatingResult:
    """Accelerated solver with a periodically checked residual certificate.

    Requires mu > 0 and params.epsilon set.  Every M-th iteration a
    backtracked proximal-gradient step is taken from the current iterate and
    its witness norm compared against epsilon; the first point certified at
    or below epsilon is returned together with its certificate and the full
    trace.

    Raises SolveTimeout (carrying the best certificate seen) when the
    iteration budget runs out, and propagates line-search failures.
    """
    if not problem.mu > 0:
        raise ValueError("the certified solver requires mu > 0")
    if params.epsilon is None:
        raise ValueError("params.epsilon must be set for the certified solver")
    problem, state, trace = _prepare(problem, params, init, counters)
    gamma0 = trace.gamma0
    best: Certificate | None = None
    while state.t <= params.max_iters:
        t = state.t
        new_state, report = apg_iteration(problem, state, params)
        row = _make_row(state, new_state, report, trace.counters, record_iterates)
        state = new_state
        if t % params.M == 0:
            cert, n_tilde = certified_prox_step(
                problem, state.x, gamma0, params.delta, params.max_backtracks
            )
            row = replace(
                row,
                cert_residual=cert.residual,
                certificate=cert,
                cert_backtracks=n_tilde,
                grad_evals=trace.counters.grad_f_evals,
                prox_evals=trace.counters.prox_evals,
            )
            if best is None or cert.residual < best.residual:
                best = cert
            trace.rows.append(row)
            if cert.residual <= params.epsilon:
                trace.final_state = state
                return TerminatingResult(x=cert.x_tilde, certificate=cert, trace=trace)
        else:
            trace.rows.append(row)
    trace.final_state = state
    raise SolveTimeout(
        f"no point certified at epsilon = {params.epsilon} within "
        f"{params.max_iters} iterations (best residual "
        f"{best.residual if best else math.inf})",
        best=best,
        trace=trace,
    )
