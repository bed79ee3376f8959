import numpy as np

from mlr.core import HierPartition, MlrMatrix


def random_partition(rng, m, n, L, permute=True):
    part = HierPartition.bisection(m, n, L)
    if permute:
        part = HierPartition(part.row_blocks, part.col_blocks,
                             rng.permutation(m), rng.permutation(n))
    return part


def random_mlr(rng, m, n, L, ranks=None, permute=True, kind="general"):
    if kind != "general":
        n = m
    part = random_partition(rng, m, n, L, permute)
    if kind != "general":
        part = HierPartition(part.row_blocks, part.row_blocks, part.row_perm, part.row_perm)
    if ranks is None:
        ranks = rng.integers(0, 3, part.num_levels)
    mlr = MlrMatrix.zeros(part, ranks, kind)
    mlr.B[:] = rng.standard_normal(mlr.B.shape)
    if kind == "general":
        mlr.C[:] = rng.standard_normal(mlr.C.shape)
    else:
        for l in range(part.num_levels):
            if kind == "symmetric":
                mlr.signs[l][:] = rng.choice([-1.0, 1.0], mlr.signs[l].shape)
            cs = mlr.level_slice(l)
            for k, rs, _ in part.blocks(l):
                mlr.C[rs, cs] = mlr.B[rs, cs] * mlr.signs[l][k]
    return mlr
