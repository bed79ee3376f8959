import numpy as np
import pytest

from mlr.core import HierPartition, storage_count, to_dense
from mlr.fitting import FitConfig, bcd_fit
from mlr.matrices import (
    GeneratorSpec,
    dgt,
    fiedler,
    graph_distance,
    multiscale_kernel,
    planted_mlr,
    random_geometric_edges,
    shortest_path_distances,
    synthetic_factor_cov,
)


def assert_metric(D, tol=1e-12):
    # D[i, j] <= D[i, k] + D[k, j] for every triple
    viol = D[:, None, :] - (D[:, :, None] + D[None, :, :])
    assert viol.max() <= tol


class TestFiedler:
    def test_given_points(self):
        np.testing.assert_array_equal(fiedler(2, a=[0.0, 1.0]), [[0, 1], [1, 0]])

    def test_properties(self):
        A = fiedler(50, seed=3)
        np.testing.assert_array_equal(A, A.T)
        assert not np.diag(A).any()
        assert A.min() >= 0 and A.max() <= 1
        assert_metric(A)

    def test_bad_size(self):
        with pytest.raises(ValueError):
            fiedler(0)


class TestKernels:
    def test_dgt_coincident_points(self):
        t = np.array([[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]])
        A = dgt(2, 2, targets=t, sources=t)
        np.testing.assert_array_equal(np.diag(A), [1.0, 1.0])

    def test_dgt_wide_bandwidth(self):
        assert dgt(20, 30, h=1e6, seed=1).min() >= 1 - 1e-9

    def test_dgt_range_and_bad_bandwidth(self):
        A = dgt(40, 30, seed=2)
        assert A.shape == (40, 30) and A.min() > 0 and A.max() <= 1
        with pytest.raises(ValueError):
            dgt(3, 3, h=0.0)

    def test_multiscale_coincident_points(self):
        p = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        A = multiscale_kernel(2, 2, levels=3, targets=p, sources=p)
        np.testing.assert_array_equal(np.diag(A), [3.0, 3.0])

    def test_multiscale_single_level_large_sigma(self):
        A = multiscale_kernel(10, 12, levels=1, sigma=1e4, seed=0)
        assert A.min() >= 1 - 1e-7

    def test_multiscale_range(self):
        A = multiscale_kernel(30, 20, levels=3, seed=4)
        assert A.min() > 0 and A.max() <= 3
        with pytest.raises(ValueError):
            multiscale_kernel(3, 3, levels=0)


class TestGraph:
    def test_path(self):
        D = shortest_path_distances(3, [(0, 1, 1.0), (1, 2, 1.0)])
        np.testing.assert_array_equal(D, [[0, 1, 2], [1, 0, 1], [2, 1, 0]])

    def test_single_edge(self):
        assert shortest_path_distances(2, [(0, 1, 0.7)])[0, 1] == 0.7

    def test_random_graph_is_a_metric(self):
        D = graph_distance(100, seed=5)
        assert np.isfinite(D).all()
        np.testing.assert_array_equal(D, D.T)
        assert not np.diag(D).any()
        assert_metric(D, tol=1e-12)

    def test_edge_weights(self):
        edges = random_geometric_edges(60, seed=1)
        w = np.array([e[2] for e in edges])
        assert w.min() >= 0.5 and w.max() <= 1.5


class TestFactorCov:
    def test_psd_and_symmetric(self):
        A = synthetic_factor_cov(50, 3, seed=0)
        np.testing.assert_array_equal(A, A.T)
        assert np.linalg.eigvalsh(A).min() >= -1e-10

    def test_no_factors_is_diagonal(self):
        A = synthetic_factor_cov(8, 0, seed=0)
        np.testing.assert_array_equal(A, np.diag(np.diag(A)))
        assert np.diag(A).min() >= 0.1

    def test_eigenvalues_above_noise_floor(self):
        lam = np.linalg.eigvalsh(synthetic_factor_cov(60, 4, seed=2))
        assert np.sum(lam > 1.0) == 4

    def test_bad_factor_count(self):
        with pytest.raises(ValueError):
            synthetic_factor_cov(5, 5)


class TestPlanted:
    @pytest.mark.parametrize("kind", ["general", "symmetric", "psd"])
    def test_dense_matches(self, kind):
        part = HierPartition.bisection(12, 12, 3)
        mlr, A = planted_mlr(part, [1, 2, 1], seed=1, kind=kind)
        np.testing.assert_array_equal(to_dense(mlr), A)
        if kind == "psd":
            assert np.linalg.eigvalsh(A).min() >= -1e-10

    def test_storage(self):
        part = HierPartition.bisection(20, 16, 3)
        mlr, _ = planted_mlr(part, [2, 1, 1], seed=0)
        assert storage_count(mlr) == (20 + 16) * 4

    def test_self_consistent_refit(self):
        part = HierPartition.bisection(32, 24, 2)
        mlr, A = planted_mlr(part, [2, 1], seed=3)
        fit = mlr.copy()
        fit.B[:] = 0.0
        fit.C[:] = 0.0
        rep = bcd_fit(A, fit, FitConfig(eps_rel=1e-10, max_epochs=300))
        assert rep.final_error <= 1e-8


class TestSpec:
    def test_parse(self):
        g = GeneratorSpec.parse("dgt:m=10,n=12,h=0.5,seed=9")
        assert g.kind == "dgt" and g.params == {"m": 10, "n": 12, "h": 0.5} and g.seed == 9
        assert g.generate().shape == (10, 12)

    def test_determinism(self):
        for text in ("fiedler:n=20", "multiscale_kernel:n=15", "graph_distance:n=30",
                     "synthetic_factor_cov:n=10,p=2", "planted_mlr:m=16,n=12,L=3,r=1"):
            a = GeneratorSpec.parse(text, seed=4).generate()
            b = GeneratorSpec.parse(text, seed=4).generate()
            np.testing.assert_array_equal(a, b)
            assert np.isfinite(a).all()
        assert not np.array_equal(GeneratorSpec.parse("fiedler:n=20", seed=1).generate(),
                                  GeneratorSpec.parse("fiedler:n=20", seed=2).generate())

    def test_bad_specs(self):
        with pytest.raises(ValueError):
            GeneratorSpec.parse("nonsense:n=3")
        with pytest.raises(ValueError):
            GeneratorSpec.parse("fiedler:n")
        with pytest.raises(KeyError):
            GeneratorSpec.parse("fiedler").generate()
