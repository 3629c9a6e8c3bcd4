"""Command-line harness: run a solver on a spec file, emit traces and a summary.

Spec files are YAML with an explicit ``version: 1`` and fail loudly on
unknown keys.  Exit codes: 0 certified success, 1 spec/validation error,
2 timeout or solve failure (partial outputs still written).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from . import problems
from .apg import ApgParams, ApgTrace, apg_run, apg_terminating
from .model import ConicProblem, LineSearchFailure, SolveTimeout
from .outer import OuterParams, OuterTrace, ppa_unconstrained, prox_al
from .proxcone import BoxTerm, L1Term, NonnegativeTerm, SquaredL2Term, ZeroTerm

MAX_WORKERS_ENV = "PROXCERT_MAX_WORKERS"

SOLVERS = ("apg", "apg-cert", "ppa", "prox-al")

_TOP_KEYS = {"version", "solver", "epsilon", "problem", "params", "init"}
_PARAM_KEYS = {
    "gamma0", "alpha0", "delta", "M", "rho0", "zeta", "sigma", "eta0",
    "max_iters", "max_outer", "max_backtracks", "warm_start_gamma",
}
_QUARTIC_KEYS = {"kind", "n", "k_terms", "seed", "mu_add", "prox"}
_CONSTRAINED_KEYS = _QUARTIC_KEYS | {"m1", "m2", "constraint_seed"}
_NAMED_KEYS = {"kind", "name"}
_PROX_KEYS = {
    "zero": {"kind"},
    "l1": {"kind", "weight"},
    "box": {"kind", "lower", "upper"},
    "nonneg": {"kind"},
    "squared_l2": {"kind", "coef", "center"},
}

INNER_COLUMNS = (
    "t", "n_t", "gamma_t", "alpha_t", "beta_t", "F", "lambda_prod",
    "grad_evals", "prox_evals", "cert_residual",
)
OUTER_COLUMNS = (
    "k", "rho_k", "eta_k", "inner_iters", "grad_evals", "prox_evals",
    "step_norm", "stat_res", "comp_res",
)


class SpecError(ValueError):
    """Invalid run specification."""


@dataclass
class RunSpec:
    solver: str
    epsilon: float | None
    problem: dict
    params: dict
    init: list | None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _check_keys(mapping: dict, allowed: set, where: str):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise SpecError(f"unknown key(s) {unknown} in {where}")


def load_run_spec(path: str) -> RunSpec:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise SpecError("spec file must contain a mapping")
    _check_keys(doc, _TOP_KEYS, "spec")
    if doc.get("version") != 1:
        raise SpecError("spec must declare version: 1")
    solver = doc.get("solver")
    if solver not in SOLVERS:
        raise SpecError(f"solver must be one of {SOLVERS}, got {solver!r}")
    problem = doc.get("problem")
    if not isinstance(problem, dict):
        raise SpecError("problem must be a mapping")
    kind = problem.get("kind")
    if kind == "quartic":
        _check_keys(problem, _QUARTIC_KEYS, "problem")
    elif kind == "constrained":
        _check_keys(problem, _CONSTRAINED_KEYS, "problem")
    elif kind == "named":
        _check_keys(problem, _NAMED_KEYS, "problem")
    else:
        raise SpecError(f"problem.kind must be quartic, constrained, or named, got {kind!r}")
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise SpecError("params must be a mapping")
    _check_keys(params, _PARAM_KEYS, "params")
    epsilon = doc.get("epsilon")
    if epsilon is not None:
        epsilon = float(epsilon)
        if not epsilon > 0:
            raise SpecError("epsilon must be positive")
    if solver != "apg" and epsilon is None:
        raise SpecError(f"solver {solver} requires epsilon")
    init = doc.get("init")
    if init is not None and not isinstance(init, list):
        raise SpecError("init must be a list of numbers")
    return RunSpec(solver=solver, epsilon=epsilon, problem=problem, params=dict(params), init=init)


def _build_prox(node, n: int):
    if node is None:
        return None
    if not isinstance(node, dict) or "kind" not in node:
        raise SpecError("prox must be a mapping with a kind")
    kind = node["kind"]
    if kind not in _PROX_KEYS:
        raise SpecError(f"unknown prox kind {kind!r}")
    _check_keys(node, _PROX_KEYS[kind], "prox")
    if kind == "zero":
        return ZeroTerm(n)
    if kind == "l1":
        return L1Term(n, float(node["weight"]))
    if kind == "nonneg":
        return NonnegativeTerm(n)
    if kind == "box":
        lower = np.broadcast_to(np.asarray(node["lower"], dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(node["upper"], dtype=float), (n,)).copy()
        return BoxTerm(lower, upper)
    center = np.broadcast_to(np.asarray(node["center"], dtype=float), (n,)).copy()
    return SquaredL2Term(float(node["coef"]), center)


def build_problem(spec: RunSpec):
    """Instantiate the problem object and its metadata block."""
    node = spec.problem
    kind = node["kind"]
    if kind == "named":
        name = node.get("name")
        if name == "ineq-1d":
            return problems.ineq_quadratic_1d(), {"kind": "named", "name": name}
        if name == "eq-qp-2d":
            return problems.eq_quadratic_2d(), {"kind": "named", "name": name}
        raise SpecError(f"unknown named instance {name!r}")
    n = int(node.get("n", 1))
    qspec = problems.QuarticSpec(
        n=n,
        k_terms=int(node.get("k_terms", 1)),
        seed=int(node.get("seed", 0)),
        mu_add=float(node.get("mu_add", 0.0)),
        prox=_build_prox(node.get("prox"), n),
    )
    meta = {
        "kind": kind,
        "n": qspec.n,
        "k_terms": qspec.k_terms,
        "seed": qspec.seed,
        "mu_add": qspec.mu_add,
        "generator": problems.GENERATOR_NAME,
    }
    if kind == "quartic":
        return problems.gen_quartic(qspec), meta
    cspec = problems.ConstrainedSpec(
        base=qspec,
        m1=int(node.get("m1", 0)),
        m2=int(node.get("m2", 0)),
        seed=int(node.get("constraint_seed", qspec.seed + 1)),
    )
    meta.update({"m1": cspec.m1, "m2": cspec.m2, "constraint_seed": cspec.seed})
    return problems.gen_constrained(cspec).conic, meta


def _apg_params(spec: RunSpec, epsilon) -> ApgParams:
    p = spec.params
    return ApgParams(
        gamma0=float(p.get("gamma0", 1.0)),
        alpha0=float(p.get("alpha0", 1.0)),
        delta=float(p.get("delta", 0.5)),
        M=int(p.get("M", 10)),
        epsilon=epsilon,
        max_iters=int(p.get("max_iters", 1_000_000)),
        max_backtracks=int(p.get("max_backtracks", 100)),
        warm_start_gamma=bool(p.get("warm_start_gamma", False)),
    )


def _outer_params(spec: RunSpec, epsilon) -> OuterParams:
    p = spec.params
    return OuterParams(
        epsilon=epsilon,
        rho0=float(p["rho0"]) if "rho0" in p else None,
        zeta=float(p.get("zeta", 2.0)),
        sigma=float(p.get("sigma", 0.4)),
        eta0=float(p.get("eta0", 1.0)),
        gamma0=float(p.get("gamma0", 1.0)),
        alpha0=float(p.get("alpha0", 1.0)),
        delta=float(p.get("delta", 0.5)),
        M=int(p.get("M", 10)),
        max_outer=int(p.get("max_outer", 50)),
        max_iters=int(p.get("max_iters", 1_000_000)),
        max_backtracks=int(p.get("max_backtracks", 100)),
        warm_start_gamma=bool(p.get("warm_start_gamma", False)),
    )


def _default_init(problem, spec: RunSpec):
    if spec.init is not None:
        return np.asarray(spec.init, dtype=float)
    return problem.nonsmooth.prox(1.0, np.zeros(problem.dim))


def _counter_totals(counters) -> dict:
    return {
        "grad_f_evals": counters.grad_f_evals,
        "prox_evals": counters.prox_evals,
        "g_evals": counters.g_evals,
        "adjoint_evals": counters.adjoint_evals,
        "cone_proj_evals": counters.cone_proj_evals,
    }


@dataclass
class RunOutcome:
    exit_code: int
    summary: dict
    inner_trace: ApgTrace | None = None
    outer_trace: OuterTrace | None = None


def execute(spec: RunSpec, epsilon: float | None = None) -> RunOutcome:
    """Run the configured solver; never raises on timeout (exit code 2 instead)."""
    epsilon = spec.epsilon if epsilon is None else epsilon
    built, meta = build_problem(spec)
    started = time.perf_counter()
    summary: dict = {"version": 1, "solver": spec.solver, "epsilon": epsilon, "problem": meta}

    def finish(code, termination, extra, inner=None, outer=None, counters=None):
        summary["termination"] = termination
        summary.update(extra)
        if counters is not None:
            summary["totals"] = _counter_totals(counters)
        summary["wall_time_s"] = time.perf_counter() - started
        return RunOutcome(exit_code=code, summary=summary, inner_trace=inner, outer_trace=outer)

    if spec.solver in ("apg", "apg-cert"):
        if isinstance(built, ConicProblem):
            raise SpecError(f"solver {spec.solver} requires an unconstrained problem")
        params = _apg_params(spec, epsilon)
        gamma0, alpha0 = params.effective(built.mu)
        summary["params"] = {
            "gamma0": gamma0, "alpha0": alpha0, "delta": params.delta, "M": params.M,
            "max_iters": params.max_iters, "max_backtracks": params.max_backtracks,
        }
        init = _default_init(built, spec)
        if spec.solver == "apg":
            if "max_iters" not in spec.params:
                # no termination criterion, so default to a modest budget
                params = dataclasses.replace(params, max_iters=1000)
                summary["params"]["max_iters"] = params.max_iters
            trace = apg_run(built, params, init, record_iterates=False)
            return finish(
                0, "iteration-budget",
                {"iterations": len(trace.rows), "residual_bound": None, "F_final": trace.rows[-1].F},
                inner=trace, counters=trace.counters,
            )
        if not built.mu > 0:
            raise SpecError("solver apg-cert requires mu > 0")
        try:
            res = apg_terminating(built, params, init, record_iterates=False)
        except SolveTimeout as exc:
            best = exc.best.residual if exc.best is not None else None
            return finish(
                2, "timeout",
                {"iterations": len(exc.trace.rows), "residual_bound": best},
                inner=exc.trace, counters=exc.trace.counters,
            )
        return finish(
            0, "certified",
            {"iterations": len(res.trace.rows), "residual_bound": res.certificate.residual},
            inner=res.trace, counters=res.trace.counters,
        )

    if spec.solver == "ppa":
        if isinstance(built, ConicProblem):
            raise SpecError("solver ppa requires an unconstrained problem")
        if built.mu != 0:
            raise SpecError("solver ppa requires mu = 0")
        params = _outer_params(spec, epsilon)
        rho0 = params.rho0 if params.rho0 is not None else max(10.0, params.gamma0)
        summary["params"] = {
            "rho0": rho0, "zeta": params.zeta, "sigma": params.sigma, "eta0": params.eta0,
            "gamma0": params.gamma0, "alpha0": params.alpha0, "delta": params.delta,
            "M": params.M, "max_outer": params.max_outer, "max_iters": params.max_iters,
        }
        init = _default_init(built, spec)
        try:
            res = ppa_unconstrained(built, params, init)
        except SolveTimeout as exc:
            return finish(
                2, "timeout",
                {"outer_iterations": len(exc.trace.rows), "residual_bound": exc.best},
                outer=exc.trace, counters=exc.trace.counters,
            )
        return finish(
            0, "certified",
            {"outer_iterations": len(res.trace.rows), "residual_bound": res.residual_bound},
            outer=res.trace, counters=res.trace.counters,
        )

    # prox-al
    if not isinstance(built, ConicProblem):
        raise SpecError("solver prox-al requires a constrained problem")
    params = _outer_params(spec, epsilon)
    mu = built.base.mu
    rho0 = params.rho0 if params.rho0 is not None else max(10.0, (mu + math.sqrt(mu * mu + 4)) / 2 + 1.0)
    summary["params"] = {
        "rho0": rho0, "zeta": params.zeta, "sigma": params.sigma, "eta0": params.eta0,
        "alpha0": params.alpha0, "delta": params.delta, "M": params.M,
        "max_outer": params.max_outer, "max_iters": params.max_iters,
    }
    init_x = _default_init(built.base, spec)
    init_lam = np.zeros(built.cone.dim)
    try:
        res = prox_al(built, params, init_x, init_lam)
    except SolveTimeout as exc:
        best = exc.best
        kkt = None
        if best is not None:
            kkt = {
                "stationarity": best.stationarity_residual,
                "complementarity": best.complementarity_residual,
            }
        return finish(
            2, "timeout",
            {"outer_iterations": len(exc.trace.rows), "kkt": kkt},
            outer=exc.trace, counters=exc.trace.counters,
        )
    return finish(
        0, "certified",
        {
            "outer_iterations": len(res.trace.rows),
            "kkt": {
                "stationarity": res.report.stationarity_residual,
                "complementarity": res.report.complementarity_residual,
            },
        },
        outer=res.trace, counters=res.trace.counters,
    )


def write_inner_trace(trace: ApgTrace, path: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(INNER_COLUMNS)
        for row in trace.rows:
            writer.writerow([
                row.t, row.n_t, _fmt(row.gamma_t), _fmt(row.alpha_t), _fmt(row.beta_t),
                _fmt(row.F), _fmt(row.lambda_prod), row.grad_evals, row.prox_evals,
                _fmt(row.cert_residual),
            ])


def write_outer_trace(trace: OuterTrace, path: str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(OUTER_COLUMNS)
        for row in trace.rows:
            if row.kkt is not None:
                stat, comp = row.kkt.stationarity_residual, row.kkt.complementarity_residual
            else:
                stat, comp = row.residual_bound, None
            writer.writerow([
                row.k, _fmt(row.rho_k), _fmt(row.eta_k), row.inner_iters,
                row.grad_evals, row.prox_evals, _fmt(row.step_norm),
                _fmt(stat), _fmt(comp),
            ])


def _write_outputs(outcome: RunOutcome, trace_path, summary_path):
    if trace_path:
        if outcome.inner_trace is not None:
            write_inner_trace(outcome.inner_trace, trace_path)
        elif outcome.outer_trace is not None:
            write_outer_trace(outcome.outer_trace, trace_path)
    if summary_path:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(outcome.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run(spec_path: str, trace_path=None, summary_path=None) -> int:
    """Solve a spec file; writes trace/summary when paths are given."""
    try:
        spec = load_run_spec(spec_path)
        outcome = execute(spec)
    except (SpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LineSearchFailure as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 2
    _write_outputs(outcome, trace_path, summary_path)
    if outcome.exit_code != 0:
        print(f"not certified: {outcome.summary.get('termination')}", file=sys.stderr)
    return outcome.exit_code


def sweep(spec_path: str, epsilons: list[float], out_path: str) -> int:
    """Run one spec at several targets and tabulate evaluation scaling.

    Requires at least two strictly decreasing epsilons; the table lists
    epsilon, total gradient/prox evaluations, and the log-log slope of the
    gradient count between consecutive targets.
    """
    try:
        if len(epsilons) < 2:
            raise SpecError("sweep needs at least two epsilons")
        if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
            raise SpecError("sweep epsilons must be strictly decreasing")
        spec = load_run_spec(spec_path)
    except (SpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    workers = max(1, int(os.environ.get(MAX_WORKERS_ENV, "1")))

    def one(eps):
        try:
            return execute(spec, epsilon=eps)
        except LineSearchFailure:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, epsilons))
    else:
        outcomes = [one(eps) for eps in epsilons]

    failed = False
    rows = []
    prev = None
    for eps, outcome in zip(epsilons, outcomes):
        if outcome is None or outcome.exit_code != 0:
            failed = True
            break
        totals = outcome.summary["totals"]
        grad, prox = totals["grad_f_evals"], totals["prox_evals"]
        slope = None
        if prev is not None:
            eps_prev, grad_prev = prev
            slope = math.log(grad / grad_prev) / math.log(eps_prev / eps)
        rows.append((eps, grad, prox, slope))
        prev = (eps, grad)

    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epsilon", "grad_evals", "prox_evals", "slope"))
        for eps, grad, prox, slope in rows:
            writer.writerow((_fmt(eps), grad, prox, _fmt(slope)))
    if failed:
        print("sweep aborted: a run did not certify; partial table written", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="proxcert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one solver on a spec file")
    p_solve.add_argument("--spec", required=True)
    p_solve.add_argument("--trace", default=None, help="per-iteration CSV output path")
    p_solve.add_argument("--summary", default=None, help="JSON summary output path")

    p_sweep = sub.add_parser("sweep", help="run one spec at several epsilons")
    p_sweep.add_argument("--spec", required=True)
    p_sweep.add_argument("--eps", required=True, help="comma-separated decreasing targets")
    p_sweep.add_argument("--out", required=True, help="scaling table CSV path")

    args = parser.parse_args(argv)
    if args.command == "solve":
        return run(args.spec, trace_path=args.trace, summary_path=args.summary)
    try:
        epsilons = [float(tok) for tok in args.eps.split(",") if tok]
    except ValueError:
        print("error: --eps must be a comma-separated list of numbers", file=sys.stderr)
        return 1
    return sweep(args.spec, epsilons, args.out)


if __name__ == "__main__":
    sys.exit(main())
