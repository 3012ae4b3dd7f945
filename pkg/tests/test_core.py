import numpy as np
import pytest
from scipy.special import logsumexp as sp_logsumexp

from sparseot.core import (
    Histogram,
    OTProblem,
    Regularizer,
    ValidationError,
    logsumexp,
    topk_indices,
    topk_values,
    validate_problem,
)


def make_problem(a, b, C, reg=None):
    return OTProblem(np.asarray(a, float), np.asarray(b, float),
                     np.asarray(C, float), reg or Regularizer.none())


class TestValidation:
    def test_valid_problem_passes(self):
        p = make_problem([0.5, 0.5], [0.25, 0.75], np.zeros((2, 2)))
        q = validate_problem(p)
        assert q.m == 2 and q.n == 2

    def test_shape_mismatch(self):
        p = make_problem([0.5, 0.5], [1.0], np.zeros((3, 1)))
        with pytest.raises(ValidationError, match="dimension mismatch"):
            validate_problem(p)

    def test_negative_marginal(self):
        p = make_problem([1.5, -0.5], [0.5, 0.5], np.zeros((2, 2)))
        with pytest.raises(ValidationError):
            validate_problem(p)

    def test_mass_mismatch(self):
        p = make_problem([0.6, 0.6], [0.5, 0.5], np.zeros((2, 2)))
        with pytest.raises(ValidationError, match="mass mismatch"):
            validate_problem(p)

    def test_nonfinite_cost(self):
        C = np.array([[0.0, np.inf], [0.0, 0.0]])
        p = make_problem([0.5, 0.5], [0.5, 0.5], C)
        with pytest.raises(ValidationError):
            validate_problem(p)

    def test_k_out_of_range(self):
        p = make_problem([0.5, 0.5], [0.5, 0.5], np.zeros((2, 2)),
                         Regularizer.sparsity(1.0, 3))
        with pytest.raises(ValidationError, match="k out of range"):
            validate_problem(p)

    def test_nonpositive_gamma(self):
        p = make_problem([0.5, 0.5], [0.5, 0.5], np.zeros((2, 2)),
                         Regularizer.quadratic(0.0))
        with pytest.raises(ValidationError):
            validate_problem(p)

    def test_near_unit_mass_is_renormalized(self):
        a = np.array([0.5, 0.5 + 2e-10])
        b = np.array([1.0])
        p = validate_problem(make_problem(a, b, np.zeros((2, 1))))
        assert p.a.sum() == 1.0

    def test_unnormalized_equal_masses_accepted(self):
        p = make_problem([2.0, 2.0], [4.0], np.zeros((2, 1)))
        q = validate_problem(p)
        assert q.a.sum() == 4.0  # not a probability vector, left alone


class TestTopK:
    def test_topk_indices_sorted_by_value(self):
        s = np.array([0.1, 3.0, -1.0, 2.0])
        assert topk_indices(s, 2).tolist() == [1, 3]

    def test_tie_broken_by_lowest_index(self):
        s = np.array([1.0, 2.0, 2.0, 0.0])
        assert topk_indices(s, 1).tolist() == [1]
        assert topk_indices(s, 2).tolist() == [1, 2]

    def test_topk_values_masks_rest(self):
        s = np.array([1.0, -2.0, 5.0])
        out = topk_values(s, 1)
        assert out[2] == 5.0
        assert np.isneginf(out[[0, 1]]).all()

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            topk_indices(np.ones(3), 0)
        with pytest.raises(ValueError):
            topk_indices(np.ones(3), 4)


def test_logsumexp_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = rng.normal(size=rng.integers(1, 10)) * rng.choice([1, 100])
        assert logsumexp(s) == pytest.approx(float(sp_logsumexp(s)), rel=1e-12)


def test_logsumexp_empty_raises():
    with pytest.raises(ValueError):
        logsumexp(np.array([]))


def test_histogram_mass_and_len():
    h = Histogram(np.array([0.25, 0.75]))
    assert h.mass == 1.0
    assert len(h) == 2


def test_regularizer_factories():
    assert Regularizer.none().kind == "none"
    assert Regularizer.negentropy(0.5).gamma == 0.5
    assert Regularizer.quadratic().gamma == 1.0
    r = Regularizer.sparsity(2.0, 3)
    assert (r.kind, r.gamma, r.k) == ("sparsity", 2.0, 3)
