import numpy as np
import pytest

from sparseot.apps import (
    ClusterConfig,
    RouterConfig,
    balanced_cluster,
    gen_1d_bigaussian_target,
    gen_1d_gaussian_pair,
    gen_2d_gaussian_clouds,
    moe_gating,
    sbase_gating,
    topk_gating,
)
from sparseot.core import Regularizer
from sparseot.solvers import SolverConfig


class TestGenerators1D:
    def test_gaussian_pair_shapes_and_mass(self):
        a, b, C = gen_1d_gaussian_pair(32, 10, 4, 16, 5)
        assert a.shape == b.shape == (32,)
        assert C.shape == (32, 32)
        assert a.sum() == pytest.approx(1.0)
        assert b.sum() == pytest.approx(1.0)
        assert C.min() >= 0.0 and C.max() <= 1.0

    def test_identical_parameters_give_equal_marginals(self):
        a, b, _ = gen_1d_gaussian_pair(16, 5, 2, 5, 2)
        assert np.array_equal(a, b)

    def test_cost_diagonal_is_zero(self):
        _, _, C = gen_1d_gaussian_pair(8, 2, 1, 6, 1)
        assert np.all(np.diag(C) == 0.0)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            gen_1d_gaussian_pair(1, 0, 1, 0, 1)
        with pytest.raises(ValueError):
            gen_1d_gaussian_pair(8, 0, 0.0, 1, 1)

    def test_bigaussian_target_two_modes(self):
        a, b, _ = gen_1d_bigaussian_target()
        assert b.sum() == pytest.approx(1.0)
        # local maxima of b near the component means 8 and 24
        local_max = [i for i in range(1, 31) if b[i] > b[i - 1] and b[i] > b[i + 1]]
        assert len(local_max) == 2
        assert abs(local_max[0] - 8) <= 1 and abs(local_max[1] - 24) <= 1


class TestGenerators2D:
    MEANS = ([0.0, 0.0], [4.0, 4.0])
    COVS = (np.eye(2), np.array([[1.0, -0.8], [-0.8, 1.0]]))

    def test_deterministic_under_seed(self):
        out1 = gen_2d_gaussian_clouds(20, 20, self.MEANS, self.COVS, seed=0)
        out2 = gen_2d_gaussian_clouds(20, 20, self.MEANS, self.COVS, seed=0)
        for x, y in zip(out1, out2):
            assert np.array_equal(x, y)

    def test_identical_point_sets_zero_diagonal(self):
        src, _, _ = gen_2d_gaussian_clouds(5, 5, self.MEANS, self.COVS, seed=3)
        diff = src[:, None, :] - src[None, :, :]
        C = np.sqrt((diff ** 2).sum(-1))
        assert np.all(np.diag(C) == 0.0)

    def test_cost_homogeneity(self):
        src, tgt, C = gen_2d_gaussian_clouds(4, 6, self.MEANS, self.COVS, seed=1)
        diff = 2 * src[:, None, :] - 2 * tgt[None, :, :]
        C2 = np.sqrt((diff ** 2).sum(-1))
        assert np.allclose(C2, 2 * C)

    def test_non_pd_covariance_rejected(self):
        with pytest.raises(ValueError):
            gen_2d_gaussian_clouds(3, 3, self.MEANS,
                                   (np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]])))


class TestBalancedCluster:
    def test_two_symmetric_blobs_balanced(self):
        rng = np.random.default_rng(0)
        X = np.vstack([
            np.array([-5.0, 0.0]) + 0.2 * rng.normal(size=(20, 2)),
            np.array([5.0, 0.0]) + 0.2 * rng.normal(size=(20, 2)),
        ])
        cfg = ClusterConfig(n_clusters=2, reg=Regularizer.quadratic(0.5),
                            em_steps=10, solver=SolverConfig(max_iter=500), seed=0)
        _, T, metrics = balanced_cluster(X, cfg)
        assert T.sum(axis=0) == pytest.approx([0.5, 0.5], abs=1e-8)
        assert metrics["kl_to_uniform"] == pytest.approx(0.0, abs=1e-12)

    def test_single_cluster_center_is_mean(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 2))
        cfg = ClusterConfig(n_clusters=1, em_steps=1, seed=0, method="kmeans")
        centers, _, _ = balanced_cluster(X, cfg)
        assert centers[0] == pytest.approx(X.mean(axis=0))

    def test_more_clusters_than_points_rejected(self):
        with pytest.raises(ValueError):
            balanced_cluster(np.zeros((2, 2)), ClusterConfig(n_clusters=3))

    def test_invalid_method(self):
        with pytest.raises(ValueError):
            ClusterConfig(n_clusters=2, method="spectral")

    def test_ot_cluster_masses_stay_uniform(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(24, 2)) * 3
        cfg = ClusterConfig(n_clusters=3, reg=Regularizer.sparsity(1.0, 10),
                            em_steps=5, solver=SolverConfig(max_iter=300), seed=0)
        _, T, _ = balanced_cluster(X, cfg)
        assert T.sum(axis=0) == pytest.approx(np.full(3, 1 / 3), abs=1e-8)


class TestMoeGating:
    def test_uniform_4x2(self):
        plan, _ = moe_gating(np.zeros((4, 2)),
                             RouterConfig(num_experts=2, buffer_capacity=2))
        T = plan.entries
        assert np.all((T == 0.0) | (T == 1.0))
        assert T.sum(axis=0) == pytest.approx([2.0, 2.0])
        assert T.sum(axis=1) == pytest.approx(np.ones(4))

    def test_diagonal_2x2_k1(self):
        A = np.array([[5.0, -5.0], [-5.0, 5.0]])
        plan, _ = moe_gating(A, RouterConfig(num_experts=2, buffer_capacity=1))
        assert np.allclose(plan.entries, np.eye(2), atol=1e-8)

    def test_capacity_error(self):
        with pytest.raises(ValueError, match="capacity"):
            moe_gating(np.zeros((5, 2)), RouterConfig(num_experts=2, buffer_capacity=2))

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            moe_gating(np.zeros((4, 3)), RouterConfig(num_experts=2, buffer_capacity=4))

    def test_nonfinite_affinity(self):
        A = np.zeros((4, 2))
        A[0, 0] = np.nan
        with pytest.raises(ValueError):
            moe_gating(A, RouterConfig(num_experts=2, buffer_capacity=2))

    def test_random_instances_respect_contract(self):
        for seed in range(5):
            A = np.random.default_rng(seed).normal(size=(12, 3))
            plan, _ = moe_gating(A, RouterConfig(num_experts=3, buffer_capacity=6))
            T = plan.entries
            assert plan.col_nnz.max() <= 6
            assert np.abs(T.sum(axis=0) - 4.0).max() <= 1e-8
            assert np.abs(T.sum(axis=1) - 1.0).max() <= 1e-8


class TestBaselineGatings:
    def test_topk_keeps_kappa_per_row(self):
        A = np.random.default_rng(0).normal(size=(6, 4))
        G = topk_gating(A, 2)
        assert np.all((G > 0).sum(axis=1) == 2)
        # kept entries are the softmax values themselves
        P = np.exp(A - A.max(axis=1, keepdims=True))
        P /= P.sum(axis=1, keepdims=True)
        mask = G > 0
        assert np.allclose(G[mask], P[mask])

    def test_sbase_shape_and_row_cardinality(self):
        A = np.random.default_rng(1).normal(size=(8, 4))
        G = sbase_gating(A, 2, gamma=1.0, max_iter=200)
        assert G.shape == (8, 4)
        assert np.all((G > 0).sum(axis=1) <= 2)
