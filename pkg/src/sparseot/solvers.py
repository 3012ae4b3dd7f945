"""Concave maximizers (LBFGS with Armijo backtracking, ADAM) for the dual and
semi-dual objectives, with per-iteration convergence reporting."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from .core import DualPotentials, OTProblem, SolveReport, validate_problem
from .objectives import dual_objective, semidual_objective, sinkhorn
from .recovery import as_transport_plan, plan_from_dual, plan_from_semidual

__all__ = ["SolverConfig", "maximize", "solve"]

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True)
class SolverConfig:
    method: str = "lbfgs"  # "lbfgs" or "adam"
    max_iter: int = 500
    tol: float = 1e-6  # sup-norm of the gradient
    lbfgs_history: int = 10
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    adam_lr: float = 1e-2
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must be in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.method not in ("lbfgs", "adam"):
            raise ValueError(f"unknown method {self.method!r}")


def maximize(objective: Objective, x0: np.ndarray, cfg: SolverConfig):
    """Maximize a concave objective returning (value, gradient).

    Stops when the gradient sup-norm drops to cfg.tol or max_iter is reached.
    Returns (x_star, SolveReport); the trace records every iteration.
    """
    x0 = np.asarray(x0, dtype=float)
    value, grad = objective(x0)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise ValueError("objective is nonfinite at the initial point")
    if cfg.method == "lbfgs":
        return _lbfgs(objective, x0, value, grad, cfg)
    return _adam(objective, x0, value, grad, cfg)


def _two_loop(grad_min: np.ndarray, pairs) -> np.ndarray:
    """L-BFGS two-loop recursion for the minimization gradient grad_min."""
    q = grad_min.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        beta = rho * (y @ q)
        q += (a - beta) * s
    return -q  # descent direction for the minimization problem


def _armijo(objective, x, value, d, slope, cfg):
    step = 1.0
    for _ in range(50):
        x_new = x + step * d
        v_new, g_new = objective(x_new)
        if np.isfinite(v_new) and -v_new <= -value + cfg.armijo_c * step * slope:
            return True, x_new, v_new, g_new
        step *= cfg.backtrack_factor
    return False, x, value, None


def _lbfgs(objective, x, value, grad, cfg):
    report = SolveReport()
    t0 = time.perf_counter()
    pairs = []  # (s, y, rho) for the negated (minimization) problem
    gnorm = float(np.abs(grad).max())
    report.trace.append((0, value, gnorm, (time.perf_counter() - t0) * 1e3))
    it = 0
    while it < cfg.max_iter and gnorm > cfg.tol:
        it += 1
        gm = -grad
        d = _two_loop(gm, pairs)
        slope = gm @ d
        if slope >= 0:
            pairs.clear()
            d = -gm
            slope = gm @ d
        accepted, x_new, v_new, g_new = _armijo(objective, x, value, d, slope, cfg)
        if not accepted and pairs:
            # the quasi-Newton direction can fail at a kink of a piecewise
            # smooth objective; retry once along the raw gradient
            pairs.clear()
            d = -gm
            slope = gm @ d
            accepted, x_new, v_new, g_new = _armijo(objective, x, value, d, slope, cfg)
        if not accepted:
            report.message = "line search failed after 50 backtracks"
            break
        s = x_new - x
        y = -(g_new - grad)  # gradient change of the negated objective
        sy = s @ y
        if sy > 1e-10:
            pairs.append((s, y, 1.0 / sy))
            if len(pairs) > cfg.lbfgs_history:
                pairs.pop(0)
        x, value, grad = x_new, v_new, g_new
        gnorm = float(np.abs(grad).max())
        report.trace.append((it, value, gnorm, (time.perf_counter() - t0) * 1e3))
    report.objective = value
    report.grad_norm = gnorm
    report.iterations = it
    report.converged = gnorm <= cfg.tol
    return x, report


def _adam(objective, x, value, grad, cfg):
    report = SolveReport()
    t0 = time.perf_counter()
    b1, b2 = cfg.adam_betas
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    gnorm = float(np.abs(grad).max())
    report.trace.append((0, value, gnorm, (time.perf_counter() - t0) * 1e3))
    it = 0
    while it < cfg.max_iter and gnorm > cfg.tol:
        it += 1
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad ** 2
        m_hat = m / (1 - b1 ** it)
        v_hat = v / (1 - b2 ** it)
        x = x + cfg.adam_lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        value, grad = objective(x)
        gnorm = float(np.abs(grad).max())
        report.trace.append((it, value, gnorm, (time.perf_counter() - t0) * 1e3))
    report.objective = value
    report.grad_norm = gnorm
    report.iterations = it
    report.converged = gnorm <= cfg.tol
    return x, report


def _beta_star(p: OTProblem, alpha: np.ndarray) -> np.ndarray:
    """Exact maximizer of the dual objective over beta for fixed alpha.

    For the quadratic and sparsity regularizers the per-column subproblem is
    one-dimensional and concave; its optimum is the threshold of the
    (k-sparse) scaled-simplex projection, which makes the partially
    maximized dual coincide with the semi-dual at alpha.
    """
    from .projections import ksparse_project_simplex, project_scaled_simplex

    gamma = p.reg.gamma
    beta = np.empty(p.n)
    for j in range(p.n):
        u = (alpha - p.C[:, j]) / gamma
        if p.reg.kind == "sparsity":
            t = ksparse_project_simplex(u, float(p.b[j]), p.reg.k)
        else:
            t = project_scaled_simplex(u, float(p.b[j]))
        i = int(np.argmax(t))
        beta[j] = gamma * (t[i] - u[i])
    return beta


def _resume(objective, x0, cfg, prev: SolveReport):
    """Continue a stalled maximization from x0, merging the trace into prev."""
    x, rep = maximize(objective, x0, cfg)
    offset = prev.iterations + 1
    for it, value, gnorm, ms in rep.trace:
        prev.trace.append((offset + it, value, gnorm, ms))
    rep.trace = prev.trace
    rep.iterations = offset + rep.iterations
    return x, rep


def solve(p: OTProblem, formulation: str = "semidual", cfg: SolverConfig = SolverConfig()):
    """Solve the chosen formulation from zero-initialized potentials.

    Returns (DualPotentials, TransportPlan, SolveReport). The negentropy dual
    dispatches to the Sinkhorn block-coordinate scheme; the unregularized dual
    is rejected (it is an LP). The unregularized semi-dual is maximized with
    subgradients and converges slowly; expect to hit max_iter.
    """
    p = validate_problem(p)
    if formulation not in ("dual", "semidual"):
        raise ValueError(f"unknown formulation {formulation!r}")
    reg = p.reg
    feasibility_warning = reg.kind == "sparsity" and p.n * reg.k < p.m
    if formulation == "dual":
        if reg.kind == "none":
            raise ValueError("unregularized dual is an LP; use oracle.lp_small")
        if reg.kind == "negentropy":
            pot, plan, report = sinkhorn(p, max_iter=cfg.max_iter, tol=cfg.tol)
            report.feasibility_warning = feasibility_warning
            return pot, plan, report

        def obj(x):
            ev = dual_objective(p, x[: p.m], x[p.m:])
            return ev.value, np.concatenate([ev.grad_alpha, ev.grad_beta])

        x, report = maximize(obj, np.zeros(p.m + p.n), cfg)
        # The joint maximization can stall at a kink with beta off its exact
        # optimum. beta decouples across columns for fixed alpha, so refresh
        # it in closed form and resume; each refresh is an exact block ascent
        # step and never decreases the objective.
        for _ in range(20):
            if report.converged:
                break
            x_ref = np.concatenate([x[: p.m], _beta_star(p, x[: p.m])])
            v_ref, _ = obj(x_ref)
            if not v_ref > report.objective + 1e-12:
                break
            x, report = _resume(obj, x_ref, cfg, report)
        alpha, beta = x[: p.m], x[p.m:]
        report.ties_detected = dual_objective(p, alpha, beta).ties_detected
        report.feasibility_warning = feasibility_warning
        return DualPotentials(alpha, beta), plan_from_dual(p, alpha, beta), report

    def obj(x):
        ev = semidual_objective(p, x)
        return ev.value, ev.grad

    x, report = maximize(obj, np.zeros(p.m), cfg)
    final = semidual_objective(p, x)
    report.ties_detected = final.ties_detected
    report.feasibility_warning = feasibility_warning
    if reg.kind == "none":
        plan = as_transport_plan(p, final.plan_columns)
    else:
        plan = plan_from_semidual(p, x)
    return DualPotentials(x), plan, report
