"""Domain types, problem validation and shared numeric utilities."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "Histogram",
    "Regularizer",
    "OTProblem",
    "DualPotentials",
    "TransportPlan",
    "SolveReport",
    "validate_problem",
    "topk_values",
    "topk_indices",
    "logsumexp",
    "NNZ_THRESHOLD",
    "TIE_RTOL",
]

# Entries below this magnitude are treated as structural zeros when counting
# nonzeros of a recovered plan.
NNZ_THRESHOLD = 1e-12

# Two scores s_i, s_j are considered tied when |s_i - s_j| <= TIE_RTOL * max(1, ||s||_inf).
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Histogram:
    """A vector of nonnegative weights (a discrete measure)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Regularizer:
    """Columnwise regularizer descriptor.

    kind is one of "none", "negentropy", "quadratic", "sparsity".
    gamma is the regularization strength (unused for "none").
    k is the per-column cardinality bound ("sparsity" only).
    """

    kind: str
    gamma: float = 1.0
    k: Optional[int] = None

    KINDS = ("none", "negentropy", "quadratic", "sparsity")

    @staticmethod
    def none() -> "Regularizer":
        return Regularizer("none", gamma=1.0)

    @staticmethod
    def negentropy(gamma: float = 1.0) -> "Regularizer":
        return Regularizer("negentropy", gamma=gamma)

    @staticmethod
    def quadratic(gamma: float = 1.0) -> "Regularizer":
        return Regularizer("quadratic", gamma=gamma)

    @staticmethod
    def sparsity(gamma: float = 1.0, k: int = 1) -> "Regularizer":
        return Regularizer("sparsity", gamma=gamma, k=int(k))


@dataclass(frozen=True)
class OTProblem:
    """Discrete OT problem: marginals a (length m), b (length n), cost C (m x n)."""

    a: np.ndarray
    b: np.ndarray
    C: np.ndarray
    reg: Regularizer

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float))

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class DualPotentials:
    alpha: np.ndarray
    beta: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TransportPlan:
    """Dense nonnegative plan with per-column sparsity metadata.

    col_nnz counts entries above NNZ_THRESHOLD; marginal errors are sup-norm
    violations against the owning problem's marginals.
    """

    entries: np.ndarray
    col_nnz: np.ndarray
    row_marginal_err: float
    col_marginal_err: float


@dataclass
class SolveReport:
    objective: float = np.nan
    grad_norm: float = np.inf
    iterations: int = 0
    trace: list = field(default_factory=list)  # (iter, objective, grad_norm, wall_ms)
    converged: bool = False
    ties_detected: bool = False
    feasibility_warning: bool = False
    message: str = ""


class ValidationError(ValueError):
    """Raised when an OT problem violates a type invariant."""


def validate_problem(p: OTProblem) -> OTProblem:
    """Check all invariants of an OT problem and return it (marginals possibly renormalized).

    Marginals whose total mass is within 1e-9 of each other are accepted;
    marginals within 1e-9 of 1 are rescaled to sum exactly to 1.
    """
    a, b, C = p.a, p.b, p.C
    if a.ndim != 1 or b.ndim != 1 or C.ndim != 2:
        raise ValidationError("a and b must be vectors and C a matrix")
    m, n = a.shape[0], b.shape[0]
    if m < 1 or n < 1:
        raise ValidationError("marginals must have length >= 1")
    if C.shape != (m, n):
        raise ValidationError(
            f"dimension mismatch: C is {C.shape}, expected ({m}, {n})"
        )
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise ValidationError("marginals must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise ValidationError("negative marginal entry")
    if not np.all(np.isfinite(C)):
        raise ValidationError("nonfinite cost entry")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum(), b.sum()):
        raise ValidationError(
            f"marginal mass mismatch ({a.sum():g} vs {b.sum():g})"
        )
    reg = p.reg
    if reg.kind not in Regularizer.KINDS:
        raise ValidationError(f"unknown regularizer kind {reg.kind!r}")
    if reg.kind != "none" and not reg.gamma > 0:
        raise ValidationError("gamma must be > 0")
    if reg.kind == "sparsity":
        if reg.k is None or not (1 <= reg.k <= m):
            raise ValidationError(f"k out of range: k={reg.k}, m={m}")
    # Normalize float-rounded probability marginals to unit mass.
    if abs(a.sum() - 1.0) <= 1e-9 and a.sum() != 1.0:
        a = a / a.sum()
    if abs(b.sum() - 1.0) <= 1e-9 and b.sum() != 1.0:
        b = b / b.sum()
    return replace(p, a=a, b=b)


def topk_indices(s: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries of s, ties broken by lowest index first.

    The returned indices are sorted by decreasing value (stable on ties).
    """
    s = np.asarray(s, dtype=float)
    m = s.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k out of range: k={k}, m={m}")
    order = np.argsort(-s, kind="stable")
    return order[:k]


def topk_values(s: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest entries of s and replace the rest by -inf.

    Ties at the k-th value are broken deterministically: lowest index wins.
    """
    s = np.asarray(s, dtype=float)
    keep = topk_indices(s, k)
    out = np.full_like(s, -np.inf)
    out[keep] = s[keep]
    return out


def logsumexp(s: np.ndarray) -> float:
    """Shift-stable log(sum(exp(s)))."""
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        raise ValueError("logsumexp of empty input")
    c = s.max()
    return float(c + np.log(np.exp(s - c).sum()))
