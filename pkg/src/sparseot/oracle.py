"""Independent brute-force references for the test suite.

Nothing here shares code paths with the production projections or conjugates:
simplex projections are recomputed by bisection on the threshold, k-sparse
operations by support enumeration, and small LPs with scipy's HiGHS solver.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from .core import OTProblem, Regularizer

__all__ = [
    "bf_ksparse_project",
    "lp_small",
    "lp_dual_potentials",
    "bf_conjugate",
    "fd_gradient",
    "feasible_ksparse_plans",
]

_MAX_BF_DIM = 12
_MAX_LP_CELLS = 2500


def _bisect_tau_rows(S: np.ndarray, b: float, iters: int = 120) -> np.ndarray:
    """Per-row thresholds tau with sum_c [S[r, c] - tau_r]_+ = b, by bisection."""
    lo = S.min(axis=-1) - b
    hi = S.max(axis=-1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        over = np.maximum(S - mid[..., None], 0.0).sum(axis=-1) > b
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    return 0.5 * (lo + hi)


def _bisect_tau(s: np.ndarray, b: float) -> float:
    """Threshold tau with sum([s - tau]_+) = b, found by bisection."""
    return float(_bisect_tau_rows(np.asarray(s, dtype=float)[None, :], b)[0])


def _simplex_proj_bisect(s: np.ndarray, b: float) -> np.ndarray:
    return np.maximum(s - _bisect_tau(s, b), 0.0)


def _all_supports(m: int, k: int) -> np.ndarray:
    return np.array(list(combinations(range(m), k)), dtype=int)


def bf_ksparse_project(s: np.ndarray, b: Optional[float], k: int) -> np.ndarray:
    """k-sparse projection by enumeration of all size-k supports.

    b is None for the nonnegative-orthant projection, a positive mass for the
    scaled-simplex projection. Among minimizing supports the lexicographically
    smallest one is returned.
    """
    s = np.asarray(s, dtype=float)
    m = s.shape[0]
    if m > _MAX_BF_DIM:
        raise ValueError(f"brute force limited to m <= {_MAX_BF_DIM}")
    if not 1 <= k <= m:
        raise ValueError(f"k out of range: k={k}, m={m}")
    supports = _all_supports(m, k)  # (n_supp, k)
    S = s[supports]
    if b is None:
        kept = np.maximum(S, 0.0)
    else:
        tau = _bisect_tau_rows(S, b)
        kept = np.maximum(S - tau[:, None], 0.0)
    T = np.zeros((supports.shape[0], m))
    np.put_along_axis(T, supports, kept, axis=1)
    objs = ((s[None, :] - T) ** 2).sum(axis=1)
    # first (lexicographically smallest) support among near-minimal objectives
    winner = int(np.argmax(objs <= objs.min() + 1e-15))
    return T[winner]


def _lp_solve(a, b, C):
    m, n = C.shape
    if m * n > _MAX_LP_CELLS:
        raise ValueError(f"lp_small limited to m*n <= {_MAX_LP_CELLS}")
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    rhs = np.concatenate([a, b])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=rhs, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    return res


def lp_small(p: OTProblem):
    """Exact unregularized OT optimum (value, vertex plan) on a small instance."""
    res = _lp_solve(p.a, p.b, p.C)
    return float(res.fun), res.x.reshape(p.C.shape)


def lp_dual_potentials(p: OTProblem):
    """Optimal LP dual potentials (u, v) with u_i + v_j <= c_ij and
    <u, a> + <v, b> equal to the LP value."""
    res = _lp_solve(p.a, p.b, p.C)
    duals = np.asarray(res.eqlin.marginals, dtype=float)
    u, v = duals[: p.m], duals[p.m:]
    if abs(float(u @ p.a + v @ p.b) - float(res.fun)) > 1e-7 * max(1.0, abs(res.fun)):
        u, v = -u, -v
    return u, v


def bf_conjugate(reg: Regularizer, s: np.ndarray, b: Optional[float]) -> float:
    """Conjugate value by definition: support enumeration plus the exact
    convex subproblem (bisection projection) for the quadratic and
    sparsity-constrained cases, analytic argmax for the rest."""
    s = np.asarray(s, dtype=float)
    m = s.shape[0]
    if m > _MAX_BF_DIM:
        raise ValueError(f"brute force limited to m <= {_MAX_BF_DIM}")
    gamma = reg.gamma

    def payoff(t):
        if reg.kind == "none":
            omega = 0.0
        elif reg.kind == "negentropy":
            tt = np.where(t > 0, t, 1.0)
            omega = gamma * float((t * np.log(tt)).sum())
        else:
            omega = 0.5 * gamma * float((t ** 2).sum())
        return float(s @ t) - omega

    if reg.kind == "none":
        if b is None:
            return 0.0 if np.all(s <= 0) else np.inf
        return float(b * s.max())
    if reg.kind == "negentropy":
        if b is None:
            return float(gamma * np.exp(s / gamma - 1.0).sum())
        t = b * _softmax(s / gamma)
        return payoff(t)
    if reg.kind == "quadratic":
        if b is None:
            t = np.maximum(s, 0.0) / gamma
        else:
            t = _simplex_proj_bisect(s / gamma, b)
        return payoff(t)
    if reg.kind == "sparsity":
        k = reg.k
        supports = _all_supports(m, k)
        S = s[supports] / gamma
        if b is None:
            kept = np.maximum(S, 0.0)
        else:
            tau = _bisect_tau_rows(S, b)
            kept = np.maximum(S - tau[:, None], 0.0)
        T = np.zeros((supports.shape[0], m))
        np.put_along_axis(T, supports, kept, axis=1)
        payoffs = T @ s - 0.5 * gamma * (T ** 2).sum(axis=1)
        return float(payoffs.max())
    raise ValueError(f"unknown regularizer kind {reg.kind!r}")


def _softmax(u: np.ndarray) -> np.ndarray:
    e = np.exp(u - u.max())
    return e / e.sum()


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences per coordinate."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def feasible_ksparse_plans(a, b, k: int, n_draws: int = 20, seed: int = 0):
    """Sample feasible transportation plans whose columns are k-sparse.

    Vertices of the transportation polytope are collected by solving LPs with
    random costs; pairwise midpoints are added. Plans with a column exceeding
    k nonzeros are dropped.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rng = np.random.default_rng(seed)
    vertices = []
    for _ in range(n_draws):
        C = rng.random((a.shape[0], b.shape[0]))
        res = _lp_solve(a, b, C)
        T = res.x.reshape(a.shape[0], b.shape[0])
        if not any(np.allclose(T, V, atol=1e-12) for V in vertices):
            vertices.append(T)
    plans = list(vertices)
    for i in range(len(vertices)):
        for j in range(i + 1, len(vertices)):
            plans.append(0.5 * (vertices[i] + vertices[j]))
    return [T for T in plans if np.count_nonzero(T > 1e-12, axis=0).max() <= k]
