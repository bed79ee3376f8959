"""Multilevel low rank (MLR) matrix containers and the basic operations on them.

An MLR matrix is stored in *compressed two-matrix form*: a dense ``m x r`` array
``B`` and a dense ``n x r`` array ``C`` holding every block factor, with rows in
contiguous (permuted) order and columns grouped by level. The factor of block
``k`` on level ``l`` is ``B[row_range(l, k), level_slice(l)]``.

Permutation convention: the contiguous view of a dense matrix ``A`` is
``A_c[i, j] = A[row_perm[i], col_perm[j]]``, i.e. ``row_perm[i]`` is the original
row index placed at contiguous position ``i``. The dense value of an MLR matrix
undoes this, ``A_hat[row_perm[i], col_perm[j]] = sum_l A^l[i, j]``.

Levels and blocks are 0-based throughout the Python API. Summation order for
products is fixed (levels ascending, blocks ascending) so results are
deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    BadPermutation,
    DimensionMismatch,
    NotRefinement,
    ShapeMismatch,
    SymmetryViolation,
)

KINDS = ("general", "symmetric", "psd")


def _as_sizes(levels) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(s) for s in lvl) for lvl in levels)


@dataclass(frozen=True, eq=False)
class HierPartition:
    """Hierarchical row/column partition plus the global permutations.

    ``row_blocks[l]`` lists the contiguous row block sizes on level ``l`` (and
    likewise ``col_blocks``). Nothing is checked at construction time; call
    :func:`validate_partition` (or :func:`validate` on an MLR matrix).
    """

    row_blocks: tuple[tuple[int, ...], ...]
    col_blocks: tuple[tuple[int, ...], ...]
    row_perm: np.ndarray
    col_perm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_blocks", _as_sizes(self.row_blocks))
        object.__setattr__(self, "col_blocks", _as_sizes(self.col_blocks))
        object.__setattr__(self, "row_perm", np.asarray(self.row_perm, dtype=np.int64))
        object.__setattr__(self, "col_perm", np.asarray(self.col_perm, dtype=np.int64))

    @classmethod
    def contiguous(cls, row_blocks, col_blocks) -> "HierPartition":
        row_blocks, col_blocks = _as_sizes(row_blocks), _as_sizes(col_blocks)
        m = sum(row_blocks[0]) if row_blocks else 0
        n = sum(col_blocks[0]) if col_blocks else 0
        return cls(row_blocks, col_blocks, np.arange(m), np.arange(n))

    @classmethod
    def bisection(cls, m: int, n: int, num_levels: int) -> "HierPartition":
        """Contiguous nested halving; blocks with fewer than 2 rows or columns stop splitting."""
        rows, cols = [(m,)], [(n,)]
        for _ in range(1, num_levels):
            new_r, new_c = [], []
            for a, b in zip(rows[-1], cols[-1]):
                if min(a, b) >= 2:
                    new_r += [a // 2, a - a // 2]
                    new_c += [b // 2, b - b // 2]
                else:
                    new_r.append(a)
                    new_c.append(b)
            rows.append(tuple(new_r))
            cols.append(tuple(new_c))
        return cls.contiguous(rows, cols)

    @property
    def num_levels(self) -> int:
        return len(self.row_blocks)

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.row_perm.size), int(self.col_perm.size)

    def num_blocks(self, level: int) -> int:
        return len(self.row_blocks[level])

    def row_offsets(self, level: int) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.row_blocks[level], dtype=np.int64)])

    def col_offsets(self, level: int) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.col_blocks[level], dtype=np.int64)])

    def blocks(self, level: int) -> Iterator[tuple[int, slice, slice]]:
        """Yield ``(k, row_slice, col_slice)`` for the blocks of ``level``."""
        ro, co = self.row_offsets(level), self.col_offsets(level)
        for k in range(self.num_blocks(level)):
            yield k, slice(int(ro[k]), int(ro[k + 1])), slice(int(co[k]), int(co[k + 1]))

    def truncate(self, num_levels: int) -> "HierPartition":
        """The coarsest ``num_levels`` levels with the same permutations."""
        return HierPartition(self.row_blocks[:num_levels], self.col_blocks[:num_levels],
                             self.row_perm, self.col_perm)

    def transpose(self) -> "HierPartition":
        return HierPartition(self.col_blocks, self.row_blocks, self.col_perm, self.row_perm)

    def is_symmetric(self) -> bool:
        return self.row_blocks == self.col_blocks and np.array_equal(self.row_perm, self.col_perm)

    def to_dict(self) -> dict:
        return {
            "levels": [
                {"row_sizes": list(r), "col_sizes": list(c)}
                for r, c in zip(self.row_blocks, self.col_blocks)
            ],
            "row_perm": self.row_perm.tolist(),
            "col_perm": self.col_perm.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HierPartition":
        levels = d["levels"]
        return cls(
            [lv["row_sizes"] for lv in levels],
            [lv["col_sizes"] for lv in levels],
            d["row_perm"],
            d["col_perm"],
        )


def _cuts(sizes: Sequence[int]) -> set[int]:
    return set(np.cumsum(sizes)[:-1].tolist())


def validate_partition(part: HierPartition) -> None:
    """Raise the first violated partition invariant."""
    if part.num_levels < 1:
        raise ShapeMismatch("partition needs at least one level")
    if len(part.col_blocks) != part.num_levels:
        raise ShapeMismatch(
            f"row partition has {part.num_levels} levels, column partition {len(part.col_blocks)}"
        )
    m, n = part.shape
    for sizes_name, perm, size in (("row", part.row_perm, m), ("col", part.col_perm, n)):
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(size)):
            raise BadPermutation(f"{sizes_name}_perm is not a permutation of 0..{size - 1}")
    for l in range(part.num_levels):
        rb, cb = part.row_blocks[l], part.col_blocks[l]
        if len(rb) != len(cb):
            raise ShapeMismatch(f"level {l}: {len(rb)} row blocks but {len(cb)} column blocks")
        if l == 0 and len(rb) != 1:
            raise ShapeMismatch("level 0 must consist of a single block")
        if any(s <= 0 for s in rb) or any(s <= 0 for s in cb):
            raise ShapeMismatch(f"level {l}: block sizes must be positive")
        if sum(rb) != m or sum(cb) != n:
            raise ShapeMismatch(f"level {l}: block sizes sum to {sum(rb)}x{sum(cb)}, expected {m}x{n}")
        if l > 0:
            if not _cuts(part.row_blocks[l - 1]) <= _cuts(rb):
                raise NotRefinement(f"row partition of level {l} does not refine level {l - 1}")
            if not _cuts(part.col_blocks[l - 1]) <= _cuts(cb):
                raise NotRefinement(f"column partition of level {l} does not refine level {l - 1}")


@dataclass(eq=False)
class MlrMatrix:
    """MLR matrix in compressed two-matrix form.

    ``signs`` is only used by the symmetric kinds: ``signs[l]`` has shape
    ``(p_l, r_l)`` and holds the diagonal of the sign matrix of each block, so
    that ``C_{l,k} = B_{l,k} * signs[l][k]``. For ``psd`` every sign is +1.
    """

    partition: HierPartition
    ranks: np.ndarray
    B: np.ndarray
    C: np.ndarray
    kind: str = "general"
    signs: list[np.ndarray] | None = field(default=None)

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=np.int64).reshape(-1)
        self.B = np.asarray(self.B, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        if self.kind != "general" and self.signs is None:
            self.signs = [
                np.ones((self.partition.num_blocks(l), int(r))) for l, r in enumerate(self.ranks)
            ]

    @classmethod
    def zeros(cls, partition: HierPartition, ranks, kind: str = "general") -> "MlrMatrix":
        ranks = np.asarray(ranks, dtype=np.int64)
        m, n = partition.shape
        r = int(ranks.sum())
        return cls(partition, ranks, np.zeros((m, r)), np.zeros((n, r)), kind)

    @classmethod
    def from_blocks(cls, partition, ranks, left, right=None, kind="general", signs=None):
        """Assemble from per-block factor lists ``left[l][k]`` / ``right[l][k]``.

        For the symmetric kinds ``right`` may be omitted; it is then derived from
        ``left`` and ``signs``.
        """
        mlr = cls.zeros(partition, ranks, kind)
        if signs is not None:
            mlr.signs = [np.asarray(s, dtype=np.float64) for s in signs]
        for l in range(partition.num_levels):
            cs = mlr.level_slice(l)
            for k, rs, cls_ in partition.blocks(l):
                mlr.B[rs, cs] = left[l][k]
                if right is not None:
                    mlr.C[cls_, cs] = right[l][k]
                elif kind != "general":
                    mlr.C[cls_, cs] = np.asarray(left[l][k]) * mlr.signs[l][k]
                else:
                    raise ValueError("right factors are required for general MLR matrices")
        return mlr

    @property
    def shape(self) -> tuple[int, int]:
        return self.partition.shape

    @property
    def num_levels(self) -> int:
        return self.partition.num_levels

    @property
    def rank(self) -> int:
        return int(self.ranks.sum())

    def level_slice(self, level: int) -> slice:
        start = int(self.ranks[:level].sum())
        return slice(start, start + int(self.ranks[level]))

    def left(self, level: int, block: int) -> np.ndarray:
        ro = self.partition.row_offsets(level)
        return self.B[ro[block]:ro[block + 1], self.level_slice(level)]

    def right(self, level: int, block: int) -> np.ndarray:
        co = self.partition.col_offsets(level)
        return self.C[co[block]:co[block + 1], self.level_slice(level)]

    @property
    def left_factors(self) -> list[list[np.ndarray]]:
        return [[self.left(l, k) for k in range(self.partition.num_blocks(l))]
                for l in range(self.num_levels)]

    @property
    def right_factors(self) -> list[list[np.ndarray]]:
        return [[self.right(l, k) for k in range(self.partition.num_blocks(l))]
                for l in range(self.num_levels)]

    def copy(self) -> "MlrMatrix":
        signs = None if self.signs is None else [s.copy() for s in self.signs]
        return MlrMatrix(self.partition, self.ranks.copy(), self.B.copy(), self.C.copy(),
                         self.kind, signs)

    def assign(self, other: "MlrMatrix") -> None:
        """Overwrite this matrix in place with the contents of ``other``."""
        self.partition = other.partition
        self.ranks = other.ranks
        self.B = other.B
        self.C = other.C
        self.kind = other.kind
        self.signs = other.signs

    def set_level(self, level: int, B_level: np.ndarray, C_level: np.ndarray,
                  signs_level: np.ndarray | None = None) -> None:
        cs = self.level_slice(level)
        self.B[:, cs] = B_level
        self.C[:, cs] = C_level
        if signs_level is not None:
            self.signs[level] = signs_level


def validate(mlr: MlrMatrix) -> None:
    """Check every structural invariant; raise the first one violated."""
    part = mlr.partition
    validate_partition(part)
    m, n = part.shape
    if mlr.kind not in KINDS:
        raise ShapeMismatch(f"unknown kind {mlr.kind!r}")
    if mlr.ranks.size != part.num_levels:
        raise ShapeMismatch(f"{mlr.ranks.size} ranks for {part.num_levels} levels")
    if np.any(mlr.ranks < 0):
        raise ShapeMismatch("ranks must be non-negative")
    r = mlr.rank
    if mlr.B.shape != (m, r) or mlr.C.shape != (n, r):
        raise ShapeMismatch(
            f"factor shapes {mlr.B.shape}, {mlr.C.shape} do not match ({m}, {r}), ({n}, {r})"
        )
    if mlr.kind == "general":
        return
    if m != n or not part.is_symmetric():
        raise SymmetryViolation("symmetric MLR needs identical row/column partitions and permutations")
    if mlr.signs is None or len(mlr.signs) != part.num_levels:
        raise SymmetryViolation("missing sign matrices")
    for l in range(part.num_levels):
        s = mlr.signs[l]
        if s.shape != (part.num_blocks(l), int(mlr.ranks[l])):
            raise SymmetryViolation(f"level {l}: sign array has shape {s.shape}")
        if not np.all(np.abs(s) == 1):
            raise SymmetryViolation(f"level {l}: signs must be +1 or -1")
        if mlr.kind == "psd" and np.any(s < 0):
            raise SymmetryViolation(f"level {l}: PSD blocks must have C = B")
        for k in range(part.num_blocks(l)):
            if not np.array_equal(mlr.right(l, k), mlr.left(l, k) * s[k]):
                raise SymmetryViolation(f"block ({l}, {k}): C is not B times its sign matrix")


def level_dense(mlr: MlrMatrix, level: int) -> np.ndarray:
    """Contiguous block diagonal matrix ``A^l`` of one level."""
    m, n = mlr.shape
    out = np.zeros((m, n))
    cs = mlr.level_slice(level)
    if cs.stop == cs.start:
        return out
    for _, rs, cls_ in mlr.partition.blocks(level):
        out[rs, cls_] = mlr.B[rs, cs] @ mlr.C[cls_, cs].T
    return out


def contiguous_dense(mlr: MlrMatrix) -> np.ndarray:
    """``sum_l A^l`` in contiguous order (no permutation applied)."""
    m, n = mlr.shape
    out = np.zeros((m, n))
    for l in range(mlr.num_levels):
        cs = mlr.level_slice(l)
        if cs.stop == cs.start:
            continue
        for _, rs, cls_ in mlr.partition.blocks(l):
            out[rs, cls_] += mlr.B[rs, cs] @ mlr.C[cls_, cs].T
    return out


def to_dense(mlr: MlrMatrix) -> np.ndarray:
    part = mlr.partition
    out = np.empty(mlr.shape)
    out[np.ix_(part.row_perm, part.col_perm)] = contiguous_dense(mlr)
    return out


def permute_to_contiguous(A, part: HierPartition) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.shape != part.shape:
        raise DimensionMismatch(f"matrix shape {A.shape} does not match partition {part.shape}")
    return A[np.ix_(part.row_perm, part.col_perm)]


def permute_from_contiguous(A_c, part: HierPartition) -> np.ndarray:
    """Inverse of :func:`permute_to_contiguous`."""
    A_c = np.asarray(A_c, dtype=np.float64)
    if A_c.shape != part.shape:
        raise DimensionMismatch(f"matrix shape {A_c.shape} does not match partition {part.shape}")
    out = np.empty_like(A_c)
    out[np.ix_(part.row_perm, part.col_perm)] = A_c
    return out


def transpose(mlr: MlrMatrix) -> MlrMatrix:
    signs = None if mlr.signs is None else [s.copy() for s in mlr.signs]
    return MlrMatrix(mlr.partition.transpose(), mlr.ranks.copy(), mlr.C.copy(), mlr.B.copy(),
                     mlr.kind, signs)


@dataclass
class OpCount:
    """Tally of scalar floating point multiplies and adds."""

    mults: int = 0
    adds: int = 0

    @property
    def total(self) -> int:
        return self.mults + self.adds


def _apply(B, C, row_blocks_of, col_blocks_of, ranks, x, counter):
    # y = sum_l blkdiag_k(B_lk C_lk^T) x, contiguous order
    m = B.shape[0]
    y = np.zeros((m,) + x.shape[1:])
    ncols = 1 if x.ndim == 1 else x.shape[1]
    start = 0
    for l, r_l in enumerate(ranks):
        r_l = int(r_l)
        cs = slice(start, start + r_l)
        start += r_l
        if r_l == 0:
            continue
        ro, co = row_blocks_of(l), col_blocks_of(l)
        for k in range(len(ro) - 1):
            rs, cl = slice(ro[k], ro[k + 1]), slice(co[k], co[k + 1])
            z = C[cl, cs].T @ x[cl]
            y[rs] += B[rs, cs] @ z
            if counter is not None:
                nk, mk = co[k + 1] - co[k], ro[k + 1] - ro[k]
                counter.mults += (nk * r_l + mk * r_l) * ncols
                counter.adds += ((nk - 1) * r_l + mk * r_l) * ncols
    return y


def matvec(mlr: MlrMatrix, x, counter: OpCount | None = None) -> np.ndarray:
    """``A_hat @ x`` without forming ``A_hat``; ``x`` may be a vector or an ``n x k`` array.

    Pass an :class:`OpCount` to tally the arithmetic performed.
    """
    part = mlr.partition
    x = np.asarray(x, dtype=np.float64)
    if x.shape[:1] != (part.shape[1],) or x.ndim > 2:
        raise DimensionMismatch(f"expected leading dimension {part.shape[1]}, got {x.shape}")
    y_c = _apply(mlr.B, mlr.C, part.row_offsets, part.col_offsets, mlr.ranks,
                 x[part.col_perm], counter)
    y = np.empty_like(y_c)
    y[part.row_perm] = y_c
    return y


def matvec_adjoint(mlr: MlrMatrix, y, counter: OpCount | None = None) -> np.ndarray:
    """``A_hat.T @ y`` without forming ``A_hat``."""
    part = mlr.partition
    y = np.asarray(y, dtype=np.float64)
    if y.shape[:1] != (part.shape[0],) or y.ndim > 2:
        raise DimensionMismatch(f"expected leading dimension {part.shape[0]}, got {y.shape}")
    x_c = _apply(mlr.C, mlr.B, part.col_offsets, part.row_offsets, mlr.ranks,
                 y[part.row_perm], counter)
    x = np.empty_like(x_c)
    x[part.col_perm] = x_c
    return x


def factor_form(mlr: MlrMatrix) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse ``(B_tilde, C_tilde)`` with ``sum_l A^l = B_tilde @ C_tilde.T`` (contiguous order).

    ``B_tilde = [blkdiag(B_{1,k}) | ... | blkdiag(B_{L,k})]`` has
    ``s = sum_l p_l r_l`` columns.
    """
    bl, cl = [], []
    for l in range(mlr.num_levels):
        p = mlr.partition.num_blocks(l)
        if mlr.ranks[l] == 0:
            continue
        bl.append(sp.block_diag([mlr.left(l, k) for k in range(p)], format="csr"))
        cl.append(sp.block_diag([mlr.right(l, k) for k in range(p)], format="csr"))
    m, n = mlr.shape
    if not bl:
        return sp.csr_matrix((m, 0)), sp.csr_matrix((n, 0))
    return sp.hstack(bl, format="csr"), sp.hstack(cl, format="csr")


def storage_count(mlr: MlrMatrix) -> int:
    """Number of stored real coefficients (sign bits of symmetric kinds not counted)."""
    m, n = mlr.shape
    if mlr.kind == "general":
        return (m + n) * mlr.rank
    return m * mlr.rank
