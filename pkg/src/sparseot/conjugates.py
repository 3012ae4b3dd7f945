"""Closed-form conjugates of columnwise regularizers over the nonnegative
orthant and the scaled simplex, and the squared k-support norm pair.

Closed forms are stated for gamma = 1; general gamma is handled once via
(gamma f)^* = gamma f^*(. / gamma).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Regularizer, TIE_RTOL, logsumexp, topk_indices
from .projections import (
    find_tau,
    ksparse_project_nonneg,
    ksparse_project_simplex,
    project_scaled_simplex,
)

__all__ = [
    "ConjugateEval",
    "conj_plus",
    "conj_b",
    "ksupport_norm_sq",
    "ksupport_dual_norm_sq",
]


@dataclass(frozen=True)
class ConjugateEval:
    value: float
    grad: np.ndarray
    tie_flag: bool = False


def _tie_tol(s: np.ndarray) -> float:
    return TIE_RTOL * max(1.0, float(np.abs(s).max(initial=0.0)))


def _boundary_tie(u: np.ndarray, k: int, active: bool) -> bool:
    """Tie at the k-th largest value that affects the argmax support."""
    if k >= u.shape[0] or not active:
        return False
    v = np.sort(u)[::-1]
    return bool(v[k - 1] - v[k] <= _tie_tol(u))


def conj_plus(reg: Regularizer, s: np.ndarray) -> ConjugateEval:
    """Conjugate of the regularizer restricted to the nonnegative orthant.

    The gradient is the argmax, a point of R^m_+. For the unregularized case
    the value is a flagged +inf whenever some s_i > 0 (dual infeasible).
    """
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("nonfinite input")
    gamma = reg.gamma
    if reg.kind == "none":
        tol = _tie_tol(s)
        if np.any(s > tol):
            return ConjugateEval(np.inf, np.zeros_like(s), False)
        return ConjugateEval(0.0, np.zeros_like(s), bool(np.any(np.abs(s) <= tol)))
    if reg.kind == "negentropy":
        t = np.exp(s / gamma - 1.0)
        return ConjugateEval(float(gamma * t.sum()), t, False)
    if reg.kind == "quadratic":
        u = np.maximum(s, 0.0) / gamma
        return ConjugateEval(float(0.5 * gamma * (u ** 2).sum()), u, False)
    if reg.kind == "sparsity":
        k = reg.k
        u = s / gamma
        t = ksparse_project_nonneg(u, k)
        top = np.maximum(u[topk_indices(u, k)], 0.0)
        value = float(0.5 * gamma * (top ** 2).sum())
        tie = _boundary_tie(u, k, active=bool(top[-1] > 0))
        return ConjugateEval(value, t, tie)
    raise ValueError(f"unknown regularizer kind {reg.kind!r}")


def conj_b(reg: Regularizer, s: np.ndarray, b: float) -> ConjugateEval:
    """Conjugate of the regularizer restricted to the mass-b scaled simplex.

    The gradient is the argmax, a point of the scaled simplex (so it always
    sums to b).
    """
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("nonfinite input")
    if not b > 0:
        raise ValueError("b must be > 0")
    gamma = reg.gamma
    if reg.kind == "none":
        i = int(np.argmax(s))
        t = np.zeros_like(s)
        t[i] = b
        others = np.delete(s, i)
        tie = bool(others.size and s[i] - others.max() <= _tie_tol(s))
        return ConjugateEval(float(b * s[i]), t, tie)
    if reg.kind == "negentropy":
        u = s / gamma
        lse = logsumexp(u)
        t = b * np.exp(u - lse)
        value = gamma * b * (lse - np.log(b))
        return ConjugateEval(float(value), t, False)
    if reg.kind == "quadratic":
        u = s / gamma
        theta = find_tau(u, b)
        t = np.maximum(u - theta, 0.0)
        value = 0.5 * gamma * float(((u ** 2 - theta ** 2) * (u >= theta)).sum())
        return ConjugateEval(value, t, False)
    if reg.kind == "sparsity":
        k = reg.k
        u = s / gamma
        keep = topk_indices(u, k)
        tau = find_tau(u[keep], b)
        t = np.zeros_like(u)
        t[keep] = np.maximum(u[keep] - tau, 0.0)
        kept = u[keep]
        value = 0.5 * gamma * float(((kept ** 2 - tau ** 2) * (kept >= tau)).sum())
        tie = _boundary_tie(u, k, active=bool(u[keep[-1]] > tau))
        return ConjugateEval(value, t, tie)
    raise ValueError(f"unknown regularizer kind {reg.kind!r}")


def ksupport_dual_norm_sq(s: np.ndarray, k: int) -> float:
    """Half the sum of the k largest squared magnitudes of s."""
    s = np.asarray(s, dtype=float)
    m = s.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k out of range: k={k}, m={m}")
    sq = np.sort(s ** 2)[::-1]
    return float(0.5 * sq[:k].sum())


def ksupport_norm_sq(t: np.ndarray, k: int) -> float:
    """Half the squared k-support norm of t.

    Variational form: (1/2) min over lambda in (0, 1]^m with sum(lambda) = k
    of sum_i t_i^2 / lambda_i. Computed with the sorted closed form: find the
    unique split index r such that the r largest magnitudes get lambda = 1 and
    the tail shares the remaining budget k - r proportionally.
    """
    t = np.asarray(t, dtype=float)
    m = t.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k out of range: k={k}, m={m}")
    z = np.sort(np.abs(t))[::-1]
    if k == m or z[k - 1] == 0.0:
        # at most k nonzeros: lambda = 1 on the support is optimal
        return float(0.5 * (z ** 2).sum())
    tail = np.cumsum(z[::-1])[::-1]  # tail[i] = z_i + ... + z_{m-1}
    # r in {0, ..., k-1}: number of head entries with lambda_i = 1.
    # Optimal r is the unique one with z_{r-1} > tail_r / (k - r) >= z_r
    # (z_{-1} = +inf). Scan from r = k - 1 downward.
    for r in range(k - 1, -1, -1):
        avg = tail[r] / (k - r)
        head_ok = (r == 0) or (z[r - 1] > avg)
        if head_ok and avg >= z[r]:
            return float(0.5 * ((z[:r] ** 2).sum() + tail[r] ** 2 / (k - r)))
    # Fallback: r = 0 always satisfies head_ok; avg >= z[0] may fail only by
    # roundoff, in which case the vector is effectively 1-sparse.
    return float(0.5 * tail[0] ** 2 / k)
