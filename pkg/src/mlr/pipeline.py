"""End-to-end fitting: hierarchy construction, factor fitting, rank allocation, baselines."""
from __future__ import annotations

import numpy as np

from .core import HierPartition, MlrMatrix, validate_partition
from .exceptions import NotSymmetric, ShapeMismatch
from .fitting import FitConfig, FitReport, als_fit, bcd_fit, check_target
from .lowrank import best_rank_r
from .partition import build_hierarchy, default_levels, max_depth, uniform_ranks
from .rankalloc import allocate_ranks

MODES = ("factor_fit", "rank_alloc", "full_fit")
ALLOCATIONS = ("bottom", "uniform", "top")


def initial_ranks(r: int, num_levels: int, init: str = "uniform") -> np.ndarray:
    """Rank ``r`` placed on the finest level, spread evenly, or placed on the top level."""
    if r < 0 or num_levels < 1:
        raise ValueError("need r >= 0 and at least one level")
    if init == "uniform":
        return uniform_ranks(r, num_levels)
    ranks = np.zeros(num_levels, dtype=np.int64)
    if init == "bottom":
        ranks[-1] = r
    elif init == "top":
        ranks[0] = r
    else:
        raise ValueError(f"init must be one of {ALLOCATIONS}")
    return ranks


def fit(A, r: int, kind: str = "general", mode: str = "full_fit", init: str = "uniform",
        levels: int | None = None, partition: HierPartition | None = None,
        mlr: MlrMatrix | None = None, eps_rel: float = 0.01, eps_alloc: float | None = 1e-3,
        max_epochs: int = 100, q: int = 1, epochs_per_exchange: int = 2,
        max_exchanges: int = 1000, max_swaps: int = 5000, method: str = "bcd",
        polish: bool = True, starts: int = 1) -> tuple[MlrMatrix, FitReport]:
    """Fit an MLR approximation of rank ``r`` to ``A``.

    ``factor_fit`` fits factors for a fixed partition and allocation,
    ``rank_alloc`` adds rank exchanges, and ``full_fit`` first builds the
    hierarchy from ``A`` (unless a partition is supplied). Passing ``mlr`` warm
    starts from an existing matrix and overrides ``partition``, ``init`` and ``r``.
    ``starts`` sets how many spectral vectors each hierarchy split tries.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if method not in ("bcd", "als"):
        raise ValueError("method must be 'bcd' or 'als'")
    if method == "als" and mode != "factor_fit":
        raise ValueError("ALS is only available for factor_fit")
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeMismatch("target must be a matrix")
    m, n = A.shape
    cfg = FitConfig(eps_rel=eps_rel, max_epochs=max_epochs, init="given")

    warm = mlr is not None or (mode == "full_fit" and partition is None)
    if mlr is not None:
        mlr = mlr.copy()
        report = None
    elif mode == "full_fit" and partition is None:
        L = min(levels or default_levels(m, n), max_depth(m, n))
        _, mlr, report = build_hierarchy(A, r, kind, ranks=initial_ranks(r, L, init),
                                         cfg=cfg, max_swaps=max_swaps, starts=starts)
    else:
        if partition is None:
            L = min(levels or default_levels(m, n), max_depth(m, n))
            partition = HierPartition.bisection(m, n, L)
        validate_partition(partition)
        mlr = MlrMatrix.zeros(partition, initial_ranks(r, partition.num_levels, init), kind)
        report = None
    check_target(A, mlr)

    if mode == "factor_fit":
        start = "given" if warm else "zeros"
        if method == "als":
            if mlr.kind != "general":
                raise NotSymmetric("ALS fits general MLR matrices only")
            step = als_fit(A, mlr, FitConfig(eps_rel=eps_rel, max_epochs=max_epochs,
                                             init="given" if start == "given" else "bcd_single_sweep"))
        else:
            step = bcd_fit(A, mlr, FitConfig(eps_rel=eps_rel, max_epochs=max_epochs, init=start))
    else:
        step = allocate_ranks(
            A, mlr, FitConfig(eps_rel=eps_rel, init="given" if warm else "zeros"),
            q=q, max_exchanges=max_exchanges, epochs=epochs_per_exchange, eps_alloc=eps_alloc,
            polish_epochs=max_epochs if polish else 0,
        )
    if report is None:
        report = step
    else:
        allocations = step.allocations
        report.extend(step)
        report.allocations = allocations
    return mlr, report


def fit_best_of_inits(A, r: int, inits=ALLOCATIONS, **kwargs):
    """Run :func:`fit` from several initial allocations; returns ``(best_init, results)``.

    ``results`` maps each init to its ``(mlr, report)``.
    """
    results = {init: fit(A, r, init=init, **kwargs) for init in inits}
    best = min(results, key=lambda k: results[k][1].final_error)
    return best, results


def baseline_lr(A, r: int) -> float:
    """Relative error of the best rank ``r`` approximation."""
    A = np.asarray(A, dtype=np.float64)
    _, _, err2 = best_rank_r(A, r)
    nrm = np.linalg.norm(A)
    return float(np.sqrt(err2) / (nrm if nrm > 0 else 1.0))


def baseline_lrd(A, r: int, eps_rel: float = 1e-6, max_epochs: int = 10_000) -> float:
    """Relative error of a symmetric rank ``r - 1`` plus diagonal fit (two levels, unit leaves)."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise NotSymmetric("low rank plus diagonal baseline needs a square matrix")
    if r < 1:
        raise ValueError("r must be at least 1")
    part = HierPartition.contiguous([[n], [1] * n], [[n], [1] * n])
    mlr = MlrMatrix.zeros(part, [r - 1, 1], "symmetric")
    rep = bcd_fit(A, mlr, FitConfig(eps_rel=eps_rel, max_epochs=max_epochs))
    return rep.final_error
