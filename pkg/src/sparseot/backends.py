"""Batched columnwise projection kernels: numba-jitted hot loops with a pure
numpy fallback.

The backend is selected with the SPARSEOT_BACKEND environment variable:
"numba" (default when numba imports), "numpy". The backends agree to
floating point roundoff (tested at 1e-12); `benchmarks/bench_backends.py`
compares their speed.

All kernels work at gamma = 1; callers rescale inputs/outputs.
"""

from __future__ import annotations

import os

import numpy as np

from .core import TIE_RTOL

__all__ = [
    "active_backend",
    "ksparse_simplex_columns",
    "ksparse_nonneg_columns",
]


def _numpy_ksparse_simplex_columns(U, b, k):
    """Per column j: project U[:, j] onto the mass-b[j] simplex intersected
    with at-most-k-sparse vectors. Returns (values, T, tie flags) where
    values[j] is <s, t> - ||t||^2 / 2 at the projection t."""
    m, n = U.shape
    order = np.argsort(-U, axis=0, kind="stable")
    cols = np.arange(n)
    top = U[order[:k], cols]  # k x n, descending per column
    css = np.cumsum(top, axis=0) - b[None, :]
    ranks = np.arange(1, k + 1)[:, None]
    rho = np.count_nonzero(top - css / ranks > 0, axis=0)
    tau = css[rho - 1, cols] / rho
    kept = np.maximum(top - tau[None, :], 0.0)
    T = np.zeros_like(U)
    T[order[:k], np.broadcast_to(cols, (k, n))] = kept
    values = 0.5 * ((top ** 2 - tau[None, :] ** 2) * (top >= tau[None, :])).sum(axis=0)
    ties = np.zeros(n, dtype=bool)
    if k < m:
        nxt = U[order[k], cols]
        tol = TIE_RTOL * np.maximum(1.0, np.abs(U).max(axis=0))
        ties = (top[k - 1] - nxt <= tol) & (top[k - 1] > tau)
    return values, T, ties


def _numpy_ksparse_nonneg_columns(U, k):
    """Per column j: project U[:, j] onto the nonnegative orthant intersected
    with at-most-k-sparse vectors. Returns (values, T, tie flags)."""
    m, n = U.shape
    order = np.argsort(-U, axis=0, kind="stable")
    cols = np.arange(n)
    top = np.maximum(U[order[:k], cols], 0.0)
    T = np.zeros_like(U)
    T[order[:k], np.broadcast_to(cols, (k, n))] = top
    values = 0.5 * (top ** 2).sum(axis=0)
    ties = np.zeros(n, dtype=bool)
    if k < m:
        raw = U[order[:k], cols]
        nxt = U[order[k], cols]
        tol = TIE_RTOL * np.maximum(1.0, np.abs(U).max(axis=0))
        ties = (raw[k - 1] - nxt <= tol) & (top[k - 1] > 0)
    return values, T, ties


def _build_numba_kernels():
    import numba

    @numba.njit(cache=True)
    def _simplex_cols(U, b, k):
        m, n = U.shape
        values = np.zeros(n)
        T = np.zeros((m, n))
        ties = np.zeros(n, dtype=numba.boolean)
        for j in range(n):
            col = U[:, j]
            order = np.argsort(-col, kind="mergesort")
            css = 0.0
            rho = 0
            tau = 0.0
            for r in range(k):
                v = col[order[r]]
                css += v
                t_r = (css - b[j]) / (r + 1)
                if v - t_r > 0:
                    rho = r + 1
                    tau = t_r
            val = 0.0
            for r in range(k):
                i = order[r]
                v = col[i]
                if v >= tau:
                    T[i, j] = v - tau
                    val += 0.5 * (v * v - tau * tau)
            values[j] = val
            if k < m:
                amax = 1.0
                for i in range(m):
                    av = abs(col[i])
                    if av > amax:
                        amax = av
                boundary = col[order[k - 1]]
                nxt = col[order[k]]
                if boundary - nxt <= TIE_RTOL * amax and boundary > tau:
                    ties[j] = True
        return values, T, ties

    @numba.njit(cache=True)
    def _nonneg_cols(U, k):
        m, n = U.shape
        values = np.zeros(n)
        T = np.zeros((m, n))
        ties = np.zeros(n, dtype=numba.boolean)
        for j in range(n):
            col = U[:, j]
            order = np.argsort(-col, kind="mergesort")
            val = 0.0
            for r in range(k):
                i = order[r]
                v = col[i]
                if v > 0:
                    T[i, j] = v
                    val += 0.5 * v * v
            values[j] = val
            if k < m:
                amax = 1.0
                for i in range(m):
                    av = abs(col[i])
                    if av > amax:
                        amax = av
                boundary = col[order[k - 1]]
                nxt = col[order[k]]
                if boundary - nxt <= TIE_RTOL * amax and boundary > 0:
                    ties[j] = True
        return values, T, ties

    return _simplex_cols, _nonneg_cols


def _select_backend():
    requested = os.environ.get("SPARSEOT_BACKEND", "auto").lower()
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(f"SPARSEOT_BACKEND must be auto|numba|numpy, got {requested!r}")
    if requested == "numpy":
        return "numpy", None
    try:
        kernels = _build_numba_kernels()
        return "numba", kernels
    except ImportError:
        if requested == "numba":
            raise
        return "numpy", None


_BACKEND_NAME, _NUMBA_KERNELS = _select_backend()


def active_backend() -> str:
    return _BACKEND_NAME


def ksparse_simplex_columns(U: np.ndarray, b: np.ndarray, k: int):
    """Batched top-k sparsemax over the columns of U with column masses b."""
    U = np.ascontiguousarray(U, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if _NUMBA_KERNELS is not None:
        return _NUMBA_KERNELS[0](U, b, k)
    return _numpy_ksparse_simplex_columns(U, b, k)


def ksparse_nonneg_columns(U: np.ndarray, k: int):
    """Batched k-sparse nonnegative clipping over the columns of U."""
    U = np.ascontiguousarray(U, dtype=float)
    if _NUMBA_KERNELS is not None:
        return _NUMBA_KERNELS[1](U, k)
    return _numpy_ksparse_nonneg_columns(U, k)
