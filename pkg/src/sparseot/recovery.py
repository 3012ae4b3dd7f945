"""Plan reconstruction from optimal potentials, sparsity and cost statistics,
and opt-in least-squares marginal repair."""

from __future__ import annotations

import numpy as np

from .conjugates import conj_b, conj_plus, ksupport_norm_sq
from .core import NNZ_THRESHOLD, OTProblem, TransportPlan

__all__ = [
    "as_transport_plan",
    "plan_from_semidual",
    "plan_from_dual",
    "plan_stats",
    "repair_marginals",
]


def as_transport_plan(p: OTProblem, T: np.ndarray) -> TransportPlan:
    """Wrap a dense plan matrix with sparsity metadata; entries below the
    nonzero threshold are snapped to exact zero."""
    T = np.asarray(T, dtype=float).copy()
    T[np.abs(T) <= NNZ_THRESHOLD] = 0.0
    col_nnz = np.count_nonzero(T > NNZ_THRESHOLD, axis=0)
    row_err = float(np.abs(T.sum(axis=1) - p.a).max())
    col_err = float(np.abs(T.sum(axis=0) - p.b).max())
    return TransportPlan(T, col_nnz, row_err, col_err)


def plan_from_semidual(p: OTProblem, alpha: np.ndarray) -> TransportPlan:
    """Column j is the argmax of the mass-b_j conjugate at alpha - c_j, so
    column sums are exact by construction."""
    alpha = np.asarray(alpha, dtype=float)
    T = np.empty((p.m, p.n))
    for j in range(p.n):
        T[:, j] = conj_b(p.reg, alpha - p.C[:, j], p.b[j]).grad
    return as_transport_plan(p, T)


def plan_from_dual(p: OTProblem, alpha: np.ndarray, beta: np.ndarray) -> TransportPlan:
    """Column j is the argmax of the orthant conjugate at
    alpha + beta_j - c_j; no exact marginal guarantee."""
    if p.reg.kind == "none":
        raise ValueError("dual recovery is undefined for the unregularized problem")
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    T = np.empty((p.m, p.n))
    for j in range(p.n):
        T[:, j] = conj_plus(p.reg, alpha + beta[j] - p.C[:, j]).grad
    return as_transport_plan(p, T)


def plan_stats(p: OTProblem, plan: TransportPlan) -> dict:
    """Transport cost, regularizer value and primal objective of a plan.

    The regularizer value is +inf when a column violates the cardinality
    bound of a sparsity-constrained problem.
    """
    T = plan.entries
    if T.shape != (p.m, p.n):
        raise ValueError("plan shape does not match problem")
    cost = float((T * p.C).sum())
    reg = p.reg
    if reg.kind == "none":
        reg_value = 0.0
    elif reg.kind == "negentropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(T > 0, np.log(np.where(T > 0, T, 1.0)), 0.0)
        reg_value = float(reg.gamma * (T * logs).sum())
    elif reg.kind == "quadratic":
        reg_value = float(0.5 * reg.gamma * (T ** 2).sum())
    elif reg.kind == "sparsity":
        if np.any(plan.col_nnz > reg.k):
            reg_value = np.inf
        else:
            reg_value = float(0.5 * reg.gamma * (T ** 2).sum())
    else:
        raise ValueError(f"unknown regularizer kind {reg.kind!r}")
    return {
        "cost": cost,
        "reg_value": reg_value,
        "primal_value": cost + reg_value,
        "max_col_nnz": int(plan.col_nnz.max()),
        "marginal_err_row": plan.row_marginal_err,
        "marginal_err_col": plan.col_marginal_err,
        "ksupport_value": _ksupport_total(p, T),
    }


def _ksupport_total(p: OTProblem, T: np.ndarray) -> float:
    if p.reg.kind != "sparsity":
        return np.nan
    return float(
        p.reg.gamma * sum(ksupport_norm_sq(T[:, j], p.reg.k) for j in range(p.n))
    )


def repair_marginals(p: OTProblem, plan: TransportPlan):
    """Least-squares adjustment of the plan's nonzero entries (support held
    fixed) toward both marginal constraints.

    Returns (repaired plan, info dict). If the constrained system is
    infeasible on the fixed support, the input plan is returned with a
    diagnostic. Negative entries after the solve are clipped and columns
    rescaled back to their target mass.
    """
    T0 = plan.entries
    rows, cols = np.nonzero(T0 > NNZ_THRESHOLD)
    nnz = rows.shape[0]
    if nnz == 0:
        return plan, {"repaired": False, "reason": "empty support"}
    # marginal constraints A x = rhs over the nonzero entries x
    A = np.zeros((p.m + p.n, nnz))
    A[rows, np.arange(nnz)] = 1.0
    A[p.m + cols, np.arange(nnz)] = 1.0
    rhs = np.concatenate([p.a, p.b])
    x0 = T0[rows, cols]
    # minimize ||x - x0||^2 s.t. A x = rhs via the KKT system; lstsq handles
    # the rank deficiency (row sums and column sums share the total mass)
    kkt = np.block([
        [np.eye(nnz), A.T],
        [A, np.zeros((p.m + p.n, p.m + p.n))],
    ])
    sol, *_ = np.linalg.lstsq(kkt, np.concatenate([x0, rhs]), rcond=None)
    x = sol[:nnz]
    residual = float(np.abs(A @ x - rhs).max())
    if residual > 1e-8 * max(1.0, float(np.abs(rhs).max())):
        return plan, {"repaired": False, "reason": "support infeasible", "residual": residual}
    T = np.zeros_like(T0)
    T[rows, cols] = x
    if np.any(T < 0):
        T = np.maximum(T, 0.0)
        sums = T.sum(axis=0)
        scale = np.where(sums > 0, p.b / np.where(sums > 0, sums, 1.0), 1.0)
        T = T * scale[None, :]
    return as_transport_plan(p, T), {"repaired": True, "residual": residual}
