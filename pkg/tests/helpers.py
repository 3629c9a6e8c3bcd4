"""Checks shared between the unit suite and the acceptance suite."""

import math

from proxcert import trial_step


def trajectory_invariant_violations(problem, trace, delta=0.5, alpha_tol=1e-12):
    """Scan one accelerated-solver trace for violations of the step-scalar laws.

    Checks, for every accepted iteration: the extrapolation weight bounds
    sqrt(mu*gamma_t) <= alpha_t <= 1, beta_t in [0, 1], monotonicity of
    alpha_t^2/gamma_t, the defining quadratic's residual (relative 1e-10),
    and, when the step backtracked, that the next-larger candidate step is
    genuinely rejected when re-evaluated.
    """
    violations = []
    mu = trace.mu
    prev_ratio = trace.alpha0**2 / trace.gamma0
    for row in trace.rows:
        if not math.sqrt(mu * row.gamma_t) <= row.alpha_t <= 1.0 + alpha_tol:
            violations.append((row.t, "alpha bounds"))
        if not -alpha_tol <= row.beta_t <= 1.0 + alpha_tol:
            violations.append((row.t, "beta bounds"))
        ratio = row.alpha_t**2 / row.gamma_t
        if not ratio <= prev_ratio + 1e-12:
            violations.append((row.t, "ratio monotonicity"))
        prev_ratio = ratio
        residual = (
            row.gamma_before * row.alpha_t**2
            - (1 - row.alpha_t) * row.alpha_before**2 * row.gamma_t
            - mu * row.alpha_t * row.gamma_t * row.gamma_before
        )
        scale = max(
            row.gamma_before,
            row.alpha_before**2 * row.gamma_t,
            mu * row.gamma_t * row.gamma_before,
        )
        if not abs(residual) <= 1e-10 * scale:
            violations.append((row.t, "alpha equation residual"))
        if row.n_t > 0 and row.x_before is not None:
            rejected = trial_step(
                problem,
                row.x_before,
                row.z_before,
                row.alpha_before,
                row.gamma_before,
                trace.gamma0 * delta ** (row.n_t - 1),
            )
            if rejected.accepted:
                violations.append((row.t, "line search minimality"))
    return violations


def accounting_violations(trace, start_grad=0, start_prox=0):
    """Exact per-iteration evaluation counts along one trace.

    Every iteration costs n_t + 1 gradients and n_t + 1 prox calls; a
    certificate check adds two gradients (probe and output points) and
    cert_backtracks + 1 prox calls.
    """
    violations = []
    prev_grad, prev_prox = start_grad, start_prox
    for row in trace.rows:
        grad_delta = row.grad_evals - prev_grad
        prox_delta = row.prox_evals - prev_prox
        if row.certificate is None:
            ok = grad_delta == row.n_t + 1 and prox_delta == row.n_t + 1
        else:
            ok = (
                grad_delta == row.n_t + 1 + 2
                and prox_delta == row.n_t + 1 + row.cert_backtracks + 1
            )
        if not ok:
            violations.append((row.t, grad_delta, prox_delta, row.n_t))
        prev_grad, prev_prox = row.grad_evals, row.prox_evals
    return violations
