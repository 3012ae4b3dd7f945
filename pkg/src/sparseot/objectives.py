"""Dual and semi-dual objectives assembled from the conjugate closed forms,
the Sinkhorn block-coordinate special case and the unregularized c-transform.

Both objectives are exposed as concave maximization problems; solvers negate
internally if they prefer minimization.
"""

from __future__ import annotations

import time
from typing import NamedTuple

import numpy as np

from . import backends
from .core import DualPotentials, OTProblem, SolveReport, TIE_RTOL

__all__ = [
    "SemidualEval",
    "DualEval",
    "semidual_objective",
    "dual_objective",
    "sinkhorn",
    "c_transform",
    "transpose_problem",
]


class SemidualEval(NamedTuple):
    value: float
    grad: np.ndarray
    plan_columns: np.ndarray
    ties_detected: bool


class DualEval(NamedTuple):
    value: float
    grad_alpha: np.ndarray
    grad_beta: np.ndarray
    plan_columns: np.ndarray
    ties_detected: bool


def _colwise_logsumexp(U: np.ndarray) -> np.ndarray:
    c = U.max(axis=0)
    return c + np.log(np.exp(U - c[None, :]).sum(axis=0))


def semidual_objective(p: OTProblem, alpha: np.ndarray) -> SemidualEval:
    """Value, gradient and plan columns of the semi-dual at alpha.

    value = <alpha, a> - sum_j conj_b(alpha - c_j, b_j); the gradient is the
    residual a - sum_j t_j of the recovered plan columns (a subgradient
    selection for the unregularized case).
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (p.m,):
        raise ValueError("alpha has wrong length")
    a, b, C, reg = p.a, p.b, p.C, p.reg
    S = alpha[:, None] - C
    gamma = reg.gamma
    if reg.kind == "none":
        idx = np.argmax(S, axis=0)
        cols = np.arange(p.n)
        vals = b * S[idx, cols]
        T = np.zeros_like(S)
        T[idx, cols] = b
        part = np.partition(S, p.m - 2, axis=0) if p.m > 1 else None
        tol = TIE_RTOL * np.maximum(1.0, np.abs(S).max(axis=0))
        ties = bool(p.m > 1 and np.any(S[idx, cols] - part[p.m - 2] <= tol))
    elif reg.kind == "negentropy":
        U = S / gamma
        lse = _colwise_logsumexp(U)
        T = b[None, :] * np.exp(U - lse[None, :])
        vals = gamma * b * (lse - np.log(b))
        ties = False
    elif reg.kind == "quadratic":
        vals0, T, _ = backends.ksparse_simplex_columns(S / gamma, b, p.m)
        vals = gamma * vals0
        ties = False
    elif reg.kind == "sparsity":
        vals0, T, tie_cols = backends.ksparse_simplex_columns(S / gamma, b, reg.k)
        vals = gamma * vals0
        ties = bool(tie_cols.any())
    else:
        raise ValueError(f"unknown regularizer kind {reg.kind!r}")
    value = float(alpha @ a - vals.sum())
    grad = a - T.sum(axis=1)
    return SemidualEval(value, grad, T, ties)


def dual_objective(p: OTProblem, alpha: np.ndarray, beta: np.ndarray) -> DualEval:
    """Value and gradients of the dual at (alpha, beta)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.shape != (p.m,) or beta.shape != (p.n,):
        raise ValueError("potentials have wrong length")
    a, b, C, reg = p.a, p.b, p.C, p.reg
    if reg.kind == "none":
        raise ValueError("dual of the unregularized problem is an LP; not supported")
    S = alpha[:, None] + beta[None, :] - C
    gamma = reg.gamma
    if reg.kind == "negentropy":
        T = np.exp(S / gamma - 1.0)
        vals = gamma * T.sum(axis=0)
        ties = False
    elif reg.kind == "quadratic":
        T = np.maximum(S, 0.0) / gamma
        vals = 0.5 * gamma * (T ** 2).sum(axis=0)
        ties = False
    elif reg.kind == "sparsity":
        vals0, T, tie_cols = backends.ksparse_nonneg_columns(S / gamma, reg.k)
        vals = gamma * vals0
        ties = bool(tie_cols.any())
    else:
        raise ValueError(f"unknown regularizer kind {reg.kind!r}")
    value = float(alpha @ a + beta @ b - vals.sum())
    grad_alpha = a - T.sum(axis=1)
    grad_beta = b - T.sum(axis=0)
    return DualEval(value, grad_alpha, grad_beta, T, ties)


def c_transform(p: OTProblem, alpha: np.ndarray) -> np.ndarray:
    """Unregularized optimal beta given alpha: beta_j = min_i (c_ij - alpha_i)."""
    alpha = np.asarray(alpha, dtype=float)
    return (p.C - alpha[:, None]).min(axis=0)


def sinkhorn(p: OTProblem, max_iter: int = 1000, tol: float = 1e-9):
    """Log-domain block coordinate ascent on the entropic dual.

    Alternates exact maximization in alpha then beta. Returns the potentials,
    the recovered plan and a report; non-convergence within max_iter is
    flagged on the report with the best iterate returned.
    """
    from .recovery import as_transport_plan

    if p.reg.kind != "negentropy":
        raise ValueError("sinkhorn requires the negentropy regularizer")
    gamma = p.reg.gamma
    a, b, C = p.a, p.b, p.C
    log_a = np.log(a)
    log_b = np.log(b)
    alpha = np.zeros(p.m)
    beta = np.zeros(p.n)
    report = SolveReport()
    t0 = time.perf_counter()
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        # exact maximization in alpha: row marginals become exact
        K = (beta[None, :] - C) / gamma - 1.0
        alpha = gamma * (log_a - _colwise_logsumexp(K.T))
        # exact maximization in beta: column marginals become exact
        K = (alpha[:, None] - C) / gamma - 1.0
        beta = gamma * (log_b - _colwise_logsumexp(K))
        T = np.exp((alpha[:, None] + beta[None, :] - C) / gamma - 1.0)
        err = float(np.abs(T.sum(axis=1) - a).max())
        value = float(alpha @ a + beta @ b - gamma * T.sum())
        wall_ms = (time.perf_counter() - t0) * 1e3
        report.trace.append((it, value, err, wall_ms))
        if err <= tol:
            break
    T = np.exp((alpha[:, None] + beta[None, :] - C) / gamma - 1.0)
    report.objective = float(alpha @ a + beta @ b - gamma * T.sum())
    report.grad_norm = err
    report.iterations = it
    report.converged = err <= tol
    if not report.converged:
        report.message = f"sinkhorn did not reach tol={tol:g} in {max_iter} iterations"
    return DualPotentials(alpha, beta), as_transport_plan(p, T), report


def transpose_problem(p: OTProblem) -> OTProblem:
    """Swap rows and columns (cardinality constraints apply to columns)."""
    return OTProblem(a=p.b, b=p.a, C=p.C.T, reg=p.reg)
