"""Hierarchical partition construction by recursive spectral dissection.

Every split divides the rows (and columns) of a block into two nearly equal
groups so that the sum of squared residual entries falling inside the two
diagonal sub-blocks is as large as possible. The continuous relaxation is solved
spectrally and then improved by greedy pair swaps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import HierPartition, MlrMatrix, contiguous_dense, permute_to_contiguous
from .exceptions import DegenerateSpectrum, EigenFailure, NotSymmetric, ShapeMismatch, SvdFailure
from .fitting import FitConfig, FitReport, bcd_fit, check_target

OFFDIAG_SHIFT = 1e-12
DEGENERATE_TOL = 1e-12


@dataclass
class Dissection:
    """Two-way split of the rows and columns of a block (local indices, sorted).

    Group 2 holds the extra index when a size is odd.
    """

    row_groups: tuple[np.ndarray, np.ndarray]
    col_groups: tuple[np.ndarray, np.ndarray]
    objective: float = 0.0
    symmetric: bool = False
    swaps: int = field(default=0, compare=False)

    def row_order(self) -> np.ndarray:
        return np.concatenate(self.row_groups)

    def col_order(self) -> np.ndarray:
        return np.concatenate(self.col_groups)


def within_objective(S: np.ndarray, row_groups, col_groups) -> float:
    """Sum of ``S`` over the two diagonal sub-blocks defined by the groups."""
    (r1, r2), (c1, c2) = row_groups, col_groups
    return float(S[np.ix_(r1, c1)].sum() + S[np.ix_(r2, c2)].sum())


def _sort_split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(x, kind="stable")
    h = x.size // 2
    return np.sort(order[:h]), np.sort(order[h:])


def _alternating_split(size: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(size)
    return idx[1::2], idx[0::2]


def _make(S, rows, cols, symmetric) -> Dissection:
    return Dissection(rows, cols, within_objective(S, rows, cols), symmetric)


def _laplacian_vectors(R) -> tuple[np.ndarray, np.ndarray]:
    """Squared entries of a symmetric block and eigenvectors of their graph Laplacian."""
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise NotSymmetric(f"block of shape {R.shape} is not square")
    if np.linalg.norm(R - R.T) > 1e-8 * np.linalg.norm(R):
        raise NotSymmetric("residual block is not symmetric")
    S = R * R
    n = S.shape[0]
    if n < 2:
        raise ShapeMismatch("need at least two indices to split")
    W = S.copy()
    np.fill_diagonal(W, 0.0)
    # strictly positive weights keep the graph connected
    W += OFFDIAG_SHIFT * (S.max() if S.max() > 0 else 1.0)
    np.fill_diagonal(W, 0.0)
    lap = np.diag(W.sum(axis=1)) - W
    try:
        _, vecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    return S, vecs


def dissect_symmetric(R) -> Dissection:
    """Split a symmetric block with the Fiedler vector of the squared-entry graph."""
    S, vecs = _laplacian_vectors(R)
    groups = _sort_split(vecs[:, 1])
    return _make(S, groups, groups, True)


def _symmetric_starts(R, vectors: int):
    S, vecs = _laplacian_vectors(R)
    for i in range(1, min(vectors + 1, S.shape[0])):
        for sign in (1, -1):
            groups = _sort_split(sign * vecs[:, i])
            yield _make(S, groups, groups, True)


def center_squared(R) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(S, S_centered)`` where ``S = R*R`` and the centered copy has zero row and column sums."""
    R = np.asarray(R, dtype=np.float64)
    S = R * R
    m, n = S.shape
    total = S.sum()
    a = (S.sum(axis=1) - total / (2 * m)) / n
    b = (S.sum(axis=0) - total / (2 * n)) / m
    return S, S - a[:, None] - b[None, :]


def dissect_bipartite(R, which: str = "largest") -> Dissection:
    """Co-cluster the rows and columns of a general block.

    ``which="largest"`` rounds the dominant singular pair of the centered squared
    residual, which maximizes the relaxed within-group objective.
    ``which="smallest"`` uses the smallest singular pair above the noise floor
    instead.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or min(R.shape) < 2:
        raise ShapeMismatch(f"block of shape {R.shape} cannot be split two ways")
    if which not in ("largest", "smallest"):
        raise ValueError("which must be 'largest' or 'smallest'")
    S, St = center_squared(R)
    try:
        U, s, Vt = np.linalg.svd(St)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc
    scale = np.linalg.norm(S)
    if scale == 0 or s[0] <= DEGENERATE_TOL * scale:
        raise DegenerateSpectrum("centered squared residual is numerically zero")
    if which == "largest":
        i = 0
    else:
        # rank of St is at most min(m, n) - 1: the all-ones directions are null
        pos = np.flatnonzero(s[: min(St.shape) - 1] > DEGENERATE_TOL * s[0])
        i = int(pos[-1])
    u, v = U[:, i], Vt[i]
    # orient so that u^T St v > 0 (maximization)
    if u @ St @ v < 0:
        v = -v
    return _make(S, _sort_split(u), _sort_split(v), False)


def _membership(groups, size):
    lab = np.zeros(size, dtype=bool)
    lab[groups[0]] = True
    return lab


def _refine_symmetric(S, d: Dissection, max_swaps: int, tol: float) -> int:
    n = S.shape[0]
    in1 = _membership(d.row_groups, n)
    D1 = S[:, in1].sum(axis=1)
    D2 = S[:, ~in1].sum(axis=1)
    diag = np.diag(S)
    swaps = 0
    while swaps < max_swaps:
        g1, g2 = np.flatnonzero(in1), np.flatnonzero(~in1)
        ga = 2 * (D2[g1] - D1[g1]) + 2 * diag[g1]
        gb = 2 * (D1[g2] - D2[g2]) + 2 * diag[g2]
        gain = ga[:, None] + gb[None, :] - 4 * S[np.ix_(g1, g2)]
        k = int(np.argmax(gain))
        ia, ib = divmod(k, g2.size)
        if gain[ia, ib] <= tol:
            break
        a, b = g1[ia], g2[ib]
        in1[a], in1[b] = False, True
        D1 += S[:, b] - S[:, a]
        D2 += S[:, a] - S[:, b]
        swaps += 1
    groups = (np.flatnonzero(in1), np.flatnonzero(~in1))
    d.row_groups = d.col_groups = groups
    return swaps


def _refine_side(S, groups, other, budget, tol):
    """Best-improvement swaps of one side while the other side's groups stay fixed."""
    in1 = _membership(groups, S.shape[0])
    o1 = _membership(other, S.shape[1])
    P1 = S[:, o1].sum(axis=1)
    P2 = S[:, ~o1].sum(axis=1)
    diff = P2 - P1  # gain of moving an index from group 1 to group 2
    swaps = 0
    while swaps < budget:
        g1, g2 = np.flatnonzero(in1), np.flatnonzero(~in1)
        ia, ib = int(np.argmax(diff[g1])), int(np.argmin(diff[g2]))
        if diff[g1][ia] - diff[g2][ib] <= tol:
            break
        in1[g1[ia]], in1[g2[ib]] = False, True
        swaps += 1
    return (np.flatnonzero(in1), np.flatnonzero(~in1)), swaps


def greedy_refine(R, d: Dissection, max_swaps: int = 5000) -> Dissection:
    """Improve ``d`` in place by objective-increasing pair swaps; returns ``d``.

    Each step applies the single best swap (rows and columns together for a
    symmetric dissection; alternating row and column passes otherwise) and stops
    at a local optimum or after ``max_swaps`` swaps.
    """
    R = np.asarray(R, dtype=np.float64)
    S = R * R
    if max_swaps <= 0:
        return d
    tol = 1e-13 * max(float(S.sum()), np.finfo(float).tiny)
    if d.symmetric:
        d.swaps += _refine_symmetric(S, d, max_swaps, tol)
    else:
        left = max_swaps
        while left > 0:
            d.row_groups, sr = _refine_side(S, d.row_groups, d.col_groups, left, tol)
            left -= sr
            d.col_groups, sc = _refine_side(S.T, d.col_groups, d.row_groups, left, tol)
            left -= sc
            d.swaps += sr + sc
            if sr + sc == 0:
                break
    d.objective = within_objective(S, d.row_groups, d.col_groups)
    return d


def _bipartite_starts(R, pairs: int):
    S, St = center_squared(R)
    U, s, Vt = np.linalg.svd(St)
    if np.linalg.norm(S) == 0 or s[0] <= DEGENERATE_TOL * np.linalg.norm(S):
        raise DegenerateSpectrum("centered squared residual is numerically zero")
    for i in range(min(pairs, s.size)):
        if s[i] <= DEGENERATE_TOL * s[0]:
            break
        for su, sv in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            yield _make(S, _sort_split(su * U[:, i]), _sort_split(sv * Vt[i]), False)


def split_block(R, symmetric: bool, max_swaps: int = 5000, pairs: int = 2) -> Dissection:
    """Dissect and refine one block.

    Starting points are sort-splits of both orientations of the leading
    ``pairs`` spectral vectors (Laplacian eigenvectors from the second one
    on for symmetric blocks, singular pairs of the centered squares
    otherwise); the best refined split wins. A degenerate general residual
    falls back to an alternating split.
    """
    R = np.asarray(R, dtype=np.float64)
    if symmetric:
        starts = list(_symmetric_starts(R, pairs))
    else:
        starts = _general_starts(R, pairs)
    best = None
    for d in starts:
        d = greedy_refine(R, d, max_swaps)
        if best is None or d.objective > best.objective:
            best = d
    return best


def _general_starts(R, pairs):
    try:
        starts = list(_bipartite_starts(R, pairs))
    except DegenerateSpectrum:
        S = R * R
        starts = [_make(S, _alternating_split(R.shape[0]), _alternating_split(R.shape[1]), False)]
    return starts


def default_levels(m: int, n: int) -> int:
    return math.ceil(math.log2(min(m, n))) + 1 if min(m, n) > 1 else 1


def max_depth(m: int, n: int) -> int:
    """Number of levels reachable by halving while some block has both sides of size >= 2."""
    depth, blocks = 1, [(m, n)]
    while any(min(b) >= 2 for b in blocks):
        nxt = []
        for bm, bn in blocks:
            if min(bm, bn) >= 2:
                nxt += [(bm // 2, bn // 2), (bm - bm // 2, bn - bn // 2)]
            else:
                nxt.append((bm, bn))
        blocks, depth = nxt, depth + 1
    return depth


def uniform_ranks(r: int, L: int) -> np.ndarray:
    """Spread ``r`` over ``L`` levels as evenly as possible, extras at the top."""
    ranks = np.full(L, r // L, dtype=np.int64)
    ranks[: r % L] += 1
    return ranks


def _extend(mlr: MlrMatrix, part: HierPartition, r_new: int) -> MlrMatrix:
    ranks = np.append(mlr.ranks, r_new)
    out = MlrMatrix.zeros(part, ranks, mlr.kind)
    k = int(mlr.ranks.sum())
    out.B[:, :k] = mlr.B
    out.C[:, :k] = mlr.C
    if mlr.signs is not None:
        for l, s in enumerate(mlr.signs):
            out.signs[l] = s.copy()
    return out


def build_hierarchy(A, r: int, kind: str = "general", levels: int | None = None,
                    ranks=None, cfg: FitConfig | None = None, max_swaps: int = 5000,
                    starts: int = 1):
    """Build a hierarchy top-down, fitting factors as levels are added.

    Returns ``(partition, mlr, report)``. Each new level splits every block of
    the previous one by dissecting its current residual; the new level starts
    at zero and BCD refits all levels built so far. ``ranks`` overrides the
    default nearly uniform allocation of ``r``. ``starts`` is the number of
    spectral vectors tried per split (see :func:`split_block`).
    """
    cfg = cfg or FitConfig()
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeMismatch("target must be a matrix")
    m, n = A.shape
    symmetric = kind != "general"
    if symmetric and m != n:
        raise NotSymmetric("symmetric kinds need a square target")
    if ranks is None:
        L = min(levels or default_levels(m, n), max_depth(m, n))
        ranks = uniform_ranks(r, L)
    else:
        ranks = np.asarray(ranks, dtype=np.int64)
        L = ranks.size
        if L > max_depth(m, n):
            raise ShapeMismatch(f"{L} levels exceed the realizable depth {max_depth(m, n)}")
    fit_cfg = FitConfig(eps_rel=cfg.eps_rel, max_epochs=cfg.max_epochs,
                        cg_steps=cfg.cg_steps, init="given")

    part = HierPartition.contiguous([[m]], [[n]])
    mlr = MlrMatrix.zeros(part, ranks[:1], kind)
    check_target(A, mlr)
    report = bcd_fit(A, mlr, fit_cfg)
    rows, cols = [[m]], [[n]]
    for l in range(1, L):
        A_c = permute_to_contiguous(A, part)
        Res = A_c - contiguous_dense(mlr)
        row_local, col_local = np.arange(m), np.arange(n)
        new_rows, new_cols = [], []
        for _, rs, cs in part.blocks(l - 1):
            bm, bn = rs.stop - rs.start, cs.stop - cs.start
            if min(bm, bn) < 2:
                new_rows.append(bm)
                new_cols.append(bn)
                continue
            d = split_block(Res[rs, cs], symmetric, max_swaps, starts)
            row_local[rs] = rs.start + d.row_order()
            col_local[cs] = cs.start + d.col_order()
            new_rows += [len(g) for g in d.row_groups]
            new_cols += [len(g) for g in d.col_groups]
        rows.append(new_rows)
        cols.append(new_cols)
        part = HierPartition(
            tuple(tuple(x) for x in rows), tuple(tuple(x) for x in cols),
            part.row_perm[row_local], part.col_perm[col_local],
        )
        mlr.B[:] = mlr.B[row_local]
        mlr.C[:] = mlr.C[col_local]
        mlr = _extend(MlrMatrix(part.truncate(l), mlr.ranks, mlr.B, mlr.C, kind, mlr.signs),
                      part, int(ranks[l]))
        report.extend(bcd_fit(A, mlr, fit_cfg))
    return part, mlr, report


def distance_hierarchy(D, levels: int | None = None, bandwidth: float | None = None,
                       max_swaps: int = 5000) -> HierPartition:
    """Partition from a pairwise distance matrix between row points and column points.

    Distances are turned into Gaussian affinities ``exp(-(D / h)^2)`` (``h``
    defaults to the median distance) and split recursively.
    """
    D = np.asarray(D, dtype=np.float64)
    m, n = D.shape
    h = bandwidth or float(np.median(D)) or 1.0
    W = np.exp(-((D / h) ** 2))
    L = min(levels or default_levels(m, n), max_depth(m, n))
    part = HierPartition.contiguous([[m]], [[n]])
    rows, cols = [[m]], [[n]]
    for l in range(1, L):
        Wc = W[np.ix_(part.row_perm, part.col_perm)]
        row_local, col_local = np.arange(m), np.arange(n)
        new_rows, new_cols = [], []
        for _, rs, cs in part.blocks(l - 1):
            bm, bn = rs.stop - rs.start, cs.stop - cs.start
            if min(bm, bn) < 2:
                new_rows.append(bm)
                new_cols.append(bn)
                continue
            d = split_block(np.sqrt(Wc[rs, cs]), False, max_swaps)
            row_local[rs] = rs.start + d.row_order()
            col_local[cs] = cs.start + d.col_order()
            new_rows += [len(g) for g in d.row_groups]
            new_cols += [len(g) for g in d.col_groups]
        rows.append(new_rows)
        cols.append(new_cols)
        part = HierPartition(
            tuple(tuple(x) for x in rows), tuple(tuple(x) for x in cols),
            part.row_perm[row_local], part.col_perm[col_local],
        )
    return part
