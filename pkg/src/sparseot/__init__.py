"""Discrete optimal transport with columnwise cardinality constraints.

Dual and semi-dual solvers for unregularized, entropic, quadratic and
sparsity-constrained regularization, built on closed-form conjugates and
k-sparse projections, with brute-force oracles for verification.
"""

from .core import (
    DualPotentials,
    Histogram,
    OTProblem,
    Regularizer,
    SolveReport,
    TransportPlan,
    ValidationError,
    logsumexp,
    topk_values,
    validate_problem,
)
from .conjugates import ConjugateEval, conj_b, conj_plus, ksupport_dual_norm_sq, ksupport_norm_sq
from .objectives import c_transform, dual_objective, semidual_objective, sinkhorn
from .projections import (
    find_tau,
    ksparse_project_nonneg,
    ksparse_project_simplex,
    project_nonneg,
    project_scaled_simplex,
)
from .recovery import plan_from_dual, plan_from_semidual, plan_stats, repair_marginals
from .solvers import SolverConfig, maximize, solve

__version__ = "0.1.0"
