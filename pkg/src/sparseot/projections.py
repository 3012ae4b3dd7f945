"""Euclidean projections onto the nonnegative orthant, the scaled simplex
and their k-sparse intersections."""

from __future__ import annotations

import numpy as np

from .core import topk_indices

__all__ = [
    "project_nonneg",
    "find_tau",
    "project_scaled_simplex",
    "ksparse_project_nonneg",
    "ksparse_project_simplex",
]


def project_nonneg(s: np.ndarray) -> np.ndarray:
    """Elementwise nonnegative part [s]_+."""
    return np.maximum(np.asarray(s, dtype=float), 0.0)


def find_tau(s: np.ndarray, b: float) -> float:
    """Threshold tau such that sum_i [s_i - tau]_+ == b.

    Exact sort-and-scan: sort s descending and locate the largest prefix
    whose induced threshold keeps all its entries positive.
    """
    s = np.asarray(s, dtype=float)
    if not b > 0:
        raise ValueError("b must be > 0")
    u = np.sort(s)[::-1]
    css = np.cumsum(u) - b
    rho_candidates = np.arange(1, u.shape[0] + 1)
    cond = u - css / rho_candidates > 0
    rho = int(np.count_nonzero(cond))
    # rho >= 1 always: for the singleton prefix, s_max - (s_max - b) = b > 0.
    return float(css[rho - 1] / rho)


def project_scaled_simplex(s: np.ndarray, b: float) -> np.ndarray:
    """Euclidean projection of s onto the simplex scaled to total mass b."""
    s = np.asarray(s, dtype=float)
    tau = find_tau(s, b)
    return np.maximum(s - tau, 0.0)


def ksparse_project_nonneg(s: np.ndarray, k: int) -> np.ndarray:
    """Projection onto the intersection of the nonnegative orthant with the
    set of at-most-k-sparse vectors: clip the k largest entries, zero the rest."""
    s = np.asarray(s, dtype=float)
    keep = topk_indices(s, k)
    out = np.zeros_like(s)
    out[keep] = np.maximum(s[keep], 0.0)
    return out


def ksparse_project_simplex(s: np.ndarray, b: float, k: int) -> np.ndarray:
    """Projection onto the mass-b simplex intersected with at-most-k-sparse
    vectors (top-k sparsemax): restrict to the k largest entries, then project
    the restriction onto the scaled simplex."""
    s = np.asarray(s, dtype=float)
    keep = topk_indices(s, k)
    out = np.zeros_like(s)
    out[keep] = project_scaled_simplex(s[keep], b)
    return out
