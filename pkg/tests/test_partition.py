import itertools

import numpy as np
import pytest

from mlr.core import HierPartition, validate_partition
from mlr.exceptions import DegenerateSpectrum, NotSymmetric, ShapeMismatch
from mlr.lowrank import best_rank_r
from mlr.partition import (
    Dissection,
    build_hierarchy,
    center_squared,
    dissect_bipartite,
    dissect_symmetric,
    distance_hierarchy,
    greedy_refine,
    max_depth,
    split_block,
    uniform_ranks,
    within_objective,
)


def balanced(size):
    for g1 in itertools.combinations(range(size), size // 2):
        g1 = np.array(g1, dtype=int)
        yield g1, np.setdiff1d(np.arange(size), g1)


def brute_symmetric(S):
    return max(within_objective(S, g, g) for g in balanced(S.shape[0]))


def brute_bipartite(S):
    # for fixed row groups the best column groups follow from sorting column scores
    n = S.shape[1]
    best = -np.inf
    for r1, r2 in balanced(S.shape[0]):
        a, b = S[r1].sum(axis=0), S[r2].sum(axis=0)
        best = max(best, b.sum() + np.sort(a - b)[::-1][: n // 2].sum())
    return best


def same_split(groups, expected):
    g = {frozenset(groups[0].tolist()), frozenset(groups[1].tolist())}
    return g == {frozenset(e) for e in expected}


def planted(rng, m, n, noise=0.0, permute=True):
    R = np.zeros((m, n))
    R[: m // 2, : n // 2] = 1.0
    R[m // 2:, n // 2:] = 1.0
    R += noise * rng.standard_normal((m, n))
    rp = rng.permutation(m) if permute else np.arange(m)
    cp = rng.permutation(n) if permute else np.arange(n)
    R = R[np.ix_(rp, cp)]
    # expected groups in the permuted index space
    inv_r, inv_c = np.argsort(rp), np.argsort(cp)
    rows = [set(inv_r[: m // 2].tolist()), set(inv_r[m // 2:].tolist())]
    cols = [set(inv_c[: n // 2].tolist()), set(inv_c[n // 2:].tolist())]
    return R, rows, cols


def check_balanced(d: Dissection, m, n):
    for groups, size in ((d.row_groups, m), (d.col_groups, n)):
        assert len(groups[0]) == size // 2 and len(groups[1]) == size - size // 2
        np.testing.assert_array_equal(np.sort(np.concatenate(groups)), np.arange(size))


class TestSymmetric:
    def test_two_blocks_recovered(self, rng):
        R = np.kron(np.eye(2), np.ones((2, 2))) + 1e-6 * rng.standard_normal((4, 4))
        R = (R + R.T) / 2
        d = dissect_symmetric(R)
        assert same_split(d.row_groups, [{0, 1}, {2, 3}])
        assert d.objective == pytest.approx(brute_symmetric(R * R))

    def test_two_by_two(self):
        R = np.array([[1.0, 2.0], [2.0, 3.0]])
        d = dissect_symmetric(R)
        assert d.objective == pytest.approx(1.0 + 9.0)
        check_balanced(d, 2, 2)

    def test_constant_matrix(self):
        R = np.full((7, 7), 2.0)
        d = greedy_refine(R, dissect_symmetric(R))
        assert d.objective == pytest.approx(brute_symmetric(R * R))

    def test_odd_size_extra_in_second_group(self, rng):
        X = rng.standard_normal((7, 7))
        d = dissect_symmetric(X + X.T)
        check_balanced(d, 7, 7)
        assert d.row_groups is d.col_groups or all(
            np.array_equal(a, b) for a, b in zip(d.row_groups, d.col_groups))

    def test_rejects_asymmetric(self, rng):
        with pytest.raises(NotSymmetric):
            dissect_symmetric(rng.standard_normal((4, 4)))
        with pytest.raises(NotSymmetric):
            dissect_symmetric(rng.standard_normal((4, 3)))


class TestBipartite:
    def test_centering_identity(self, rng):
        S, St = center_squared(rng.standard_normal((5, 7)))
        scale = np.linalg.norm(S)
        assert np.abs(St.sum(axis=1)).max() <= 1e-10 * scale
        assert np.abs(St.sum(axis=0)).max() <= 1e-10 * scale

    def test_planted_co_cluster(self, rng):
        R, rows, cols = planted(rng, 6, 4)
        d = dissect_bipartite(R)
        assert same_split(d.row_groups, rows) and same_split(d.col_groups, cols)
        assert d.objective == pytest.approx(brute_bipartite(R * R))

    def test_smallest_pair_option(self, rng):
        d = dissect_bipartite(rng.standard_normal((6, 5)), which="smallest")
        check_balanced(d, 6, 5)
        with pytest.raises(ValueError):
            dissect_bipartite(np.ones((3, 3)), which="middle")

    def test_matches_symmetric_on_planted_blocks(self):
        for seed in range(10):
            g = np.random.default_rng(seed)
            n = 12
            p = g.permutation(n)
            R = np.kron(np.eye(2), np.ones((n // 2, n // 2))) + 0.05 * g.standard_normal((n, n))
            R = (R + R.T)[np.ix_(p, p)] / 2
            a, b = dissect_symmetric(R), dissect_bipartite(R)
            assert same_split(b.row_groups, [set(x.tolist()) for x in a.row_groups])

    def test_degenerate(self):
        with pytest.raises(DegenerateSpectrum):
            dissect_bipartite(np.zeros((4, 4)))
        with pytest.raises(ShapeMismatch):
            dissect_bipartite(np.ones((1, 4)))

    def test_relaxed_vectors_orthogonal_to_ones(self, rng):
        _, St = center_squared(rng.standard_normal((9, 6)))
        U, s, Vt = np.linalg.svd(St)
        assert abs(U[:, 0].sum()) <= 1e-8 * 3 and abs(Vt[0].sum()) <= 1e-8 * np.sqrt(6)


class TestRefine:
    def test_fixes_one_misassigned_row(self, rng):
        R, rows, cols = planted(rng, 8, 6, permute=False)
        good_r = (np.arange(4), np.arange(4, 8))
        bad_r = (np.array([0, 1, 2, 4]), np.array([3, 5, 6, 7]))
        cols_g = (np.arange(3), np.arange(3, 6))
        d = Dissection(bad_r, cols_g, within_objective(R * R, bad_r, cols_g))
        greedy_refine(R, d)
        assert d.swaps == 1
        assert same_split(d.row_groups, [set(g.tolist()) for g in good_r])
        assert d.objective == pytest.approx(brute_bipartite(R * R))

    def test_optimal_input_needs_no_swaps(self, rng):
        R, _, _ = planted(rng, 8, 6, permute=False)
        g_r, g_c = (np.arange(4), np.arange(4, 8)), (np.arange(3), np.arange(3, 6))
        d = greedy_refine(R, Dissection(g_r, g_c, within_objective(R * R, g_r, g_c)))
        assert d.swaps == 0
        sym = np.kron(np.eye(2), np.ones((3, 3)))
        g = (np.arange(3), np.arange(3, 6))
        d = greedy_refine(sym, Dissection(g, g, within_objective(sym, g, g), symmetric=True))
        assert d.swaps == 0

    def test_zero_budget_returns_input(self, rng):
        R = rng.standard_normal((6, 6))
        d = dissect_bipartite(R)
        before = (d.row_groups, d.col_groups, d.objective)
        out = greedy_refine(R, d, max_swaps=0)
        assert out.row_groups is before[0] and out.col_groups is before[1]
        assert out.objective == before[2] and out.swaps == 0

    def test_monotone_and_bounded(self, rng):
        for _ in range(20):
            R = rng.standard_normal((10, 9))
            d = dissect_bipartite(R, which="smallest")
            start = d.objective
            greedy_refine(R, d, max_swaps=3)
            assert d.objective >= start - 1e-12
            assert d.swaps <= 3
            check_balanced(d, 10, 9)

    def test_symmetric_swaps_keep_rows_equal_cols(self, rng):
        X = rng.standard_normal((9, 9))
        R = X + X.T
        d = greedy_refine(R, dissect_symmetric(R))
        for a, b in zip(d.row_groups, d.col_groups):
            np.testing.assert_array_equal(a, b)
        assert d.objective == pytest.approx(within_objective(R * R, d.row_groups, d.col_groups))


@pytest.mark.parametrize("symmetric", [False, True])
def test_tiny_instances_mostly_optimal(symmetric):
    hits = 0
    for seed in range(100):
        g = np.random.default_rng(seed)
        m, n = (int(x) for x in g.integers(2, 9, size=2))
        if symmetric:
            X = g.standard_normal((m, m))
            R = X + X.T
            best = brute_symmetric(R * R)
        else:
            R = g.standard_normal((m, n))
            best = brute_bipartite(R * R)
        hits += split_block(R, symmetric).objective >= best * (1 - 1e-12)
    assert hits >= 80


def test_split_block_degenerate_falls_back():
    d = split_block(np.zeros((5, 4)), False)
    check_balanced(d, 5, 4)


class TestHierarchy:
    def test_depth_and_ranks(self):
        assert max_depth(8, 8) == 4
        assert max_depth(2, 100) == 2
        assert max_depth(1, 5) == 1
        np.testing.assert_array_equal(uniform_ranks(7, 3), [3, 2, 2])
        np.testing.assert_array_equal(uniform_ranks(2, 4), [1, 1, 0, 0])

    def test_exact_low_rank(self, rng):
        A = rng.standard_normal((40, 3)) @ rng.standard_normal((3, 30))
        for L in (2, 4):
            part, mlr, rep = build_hierarchy(A, 3, ranks=[3] + [0] * (L - 1))
            validate_partition(part)
            assert rep.final_error <= 1e-9

    def test_never_worse_than_top_level(self, rng):
        A = rng.standard_normal((32, 24))
        ey = np.sqrt(best_rank_r(A, 4)[2]) / np.linalg.norm(A)
        _, mlr, rep = build_hierarchy(A, 8, ranks=[4, 2, 2])
        assert rep.final_error <= ey + 1e-9

    def test_planted_split_discovered(self, rng):
        m = 16
        A = np.zeros((m, m))
        A[:8, :8] = np.outer(rng.standard_normal(8), rng.standard_normal(8))
        A[8:, 8:] = np.outer(rng.standard_normal(8), rng.standard_normal(8))
        p, q = rng.permutation(m), rng.permutation(m)
        A = A[np.ix_(p, q)]
        part, mlr, rep = build_hierarchy(A, 1, ranks=[0, 1])
        assert rep.final_error <= 1e-8
        top = {frozenset(part.row_perm[:8].tolist()), frozenset(part.row_perm[8:].tolist())}
        inv = np.argsort(p)
        assert top == {frozenset(inv[:8].tolist()), frozenset(inv[8:].tolist())}

    def test_symmetric_uses_one_permutation(self, rng):
        X = rng.standard_normal((20, 20))
        part, mlr, _ = build_hierarchy(X + X.T, 6, kind="symmetric", levels=3)
        np.testing.assert_array_equal(part.row_perm, part.col_perm)
        assert part.row_blocks == part.col_blocks

    def test_partition_valid_and_levels_clipped(self, rng):
        A = rng.standard_normal((9, 5))
        part, mlr, _ = build_hierarchy(A, 4, levels=10)
        validate_partition(part)
        assert part.num_levels == max_depth(9, 5)
        assert all(min(r, c) >= 1 for r, c in zip(part.row_blocks[-1], part.col_blocks[-1]))

    def test_too_many_levels_with_explicit_ranks(self, rng):
        with pytest.raises(ShapeMismatch):
            build_hierarchy(rng.standard_normal((4, 4)), 4, ranks=[1] * 6)


def test_distance_hierarchy_clusters_points(rng):
    pts = np.concatenate([rng.normal(0, 0.1, (10, 2)), rng.normal(5, 0.1, (10, 2))])
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    part = distance_hierarchy(D, levels=3)
    validate_partition(part)
    assert isinstance(part, HierPartition)
    first = set(part.row_perm[:10].tolist())
    assert first in ({*range(10)}, {*range(10, 20)})
