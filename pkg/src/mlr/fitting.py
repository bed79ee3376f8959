"""Factor fitting for a fixed hierarchical partition and rank allocation.

Two methods are provided:

* :func:`bcd_fit` -- block coordinate descent over levels. Each level update is
  solved exactly block by block with a truncated SVD / eigendecomposition of the
  level residual. Levels are swept in V order ``0, 1, ..., L-1, ..., 1, 0``.
* :func:`als_fit` -- alternating least squares over all left factors, then all
  right factors, with a few conjugate gradient steps per row.

Both stop when the relative error improves by less than ``eps_rel`` (relative)
over an epoch.
"""
from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import MlrMatrix, contiguous_dense, permute_to_contiguous, validate
from .exceptions import DescentViolation, DimensionMismatch, NonFiniteInput, NotSymmetric
from .lowrank import best_rank_r, best_rank_r_psd, best_rank_r_symmetric

INITS = ("zeros", "given", "bcd_single_sweep")

# Absolute slack, relative to ||A||_F^2, tolerated per block update when the
# descent check is on.
DESCENT_SLACK = 1e-12

_descent_checking = False


@contextlib.contextmanager
def descent_check(enabled: bool = True):
    """Within the context every BCD block update verifies that the objective did not increase."""
    global _descent_checking
    prev, _descent_checking = _descent_checking, enabled
    try:
        yield
    finally:
        _descent_checking = prev


def set_descent_check(enabled: bool) -> None:
    global _descent_checking
    _descent_checking = bool(enabled)


@dataclass
class FitConfig:
    eps_rel: float = 0.01
    max_epochs: int = 100
    cg_steps: int = 10
    init: str = "zeros"

    def __post_init__(self):
        if not self.eps_rel > 0:
            raise ValueError("eps_rel must be positive")
        if self.cg_steps < 1:
            raise ValueError("cg_steps must be at least 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")


@dataclass
class FitReport:
    """Trajectory of a fit.

    ``rel_errors[0]`` is the error of the starting point, followed by one entry
    per epoch. ``ranks[t]`` is the allocation in force for ``rel_errors[t]`` and
    ``exchanges`` lists the indices where a rank exchange took effect and
    ``allocations`` holds ``(ranks, rel_error)`` after each accepted exchange
    (rank allocation only).
    """

    rel_errors: list[float] = field(default_factory=list)
    epochs_run: int = 0
    termination: str = "max_epochs"
    wall_time: float = 0.0
    ranks: list[tuple[int, ...]] = field(default_factory=list)
    exchanges: list[int] = field(default_factory=list)
    allocations: list[tuple[tuple[int, ...], float]] = field(default_factory=list)

    @property
    def final_error(self) -> float:
        return self.rel_errors[-1]

    def extend(self, other: "FitReport", exchange: bool = False) -> None:
        """Append the epochs of ``other`` (its starting point is dropped when it repeats ours)."""
        start = 1 if self.rel_errors and other.rel_errors else 0
        offset = len(self.rel_errors) - start
        if exchange:
            self.exchanges.append(len(self.rel_errors))
        self.exchanges += [offset + i for i in other.exchanges if i >= start]
        self.rel_errors += other.rel_errors[start:]
        self.ranks += other.ranks[start:]
        self.epochs_run += other.epochs_run
        self.wall_time += other.wall_time
        self.termination = other.termination


def stopping_check(prev_rel: float, cur_rel: float, eps_rel: float) -> bool:
    """True when the error did not improve by more than ``eps_rel * prev_rel``."""
    return prev_rel - cur_rel <= eps_rel * prev_rel


def check_target(A, mlr: MlrMatrix) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.shape != mlr.shape:
        raise DimensionMismatch(f"target shape {A.shape} does not match MLR shape {mlr.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteInput("target matrix contains NaN or Inf")
    if mlr.kind != "general":
        if np.linalg.norm(A - A.T) > 1e-8 * np.linalg.norm(A):
            raise NotSymmetric("symmetric MLR fitting needs a symmetric target")
    return A


def rel_error(A, mlr: MlrMatrix) -> float:
    A_c = permute_to_contiguous(A, mlr.partition)
    return _rel(A_c, contiguous_dense(mlr))


def _rel(A_c, A_hat) -> float:
    nrm = np.linalg.norm(A_c)
    return float(np.linalg.norm(A_c - A_hat) / (nrm if nrm > 0 else 1.0))


def v_order(num_levels: int) -> list[int]:
    return list(range(num_levels)) + list(range(num_levels - 2, -1, -1))


def solve_block(R: np.ndarray, r: int, kind: str):
    """Best rank ``r`` factors of one block residual, zero-padded to ``r`` columns.

    Returns ``(B_k, C_k, signs_k)``; ``signs_k`` is ``None`` for general blocks.
    """
    mk, nk = R.shape
    rr = min(r, mk, nk)
    signs = None
    if kind == "general":
        b, c, _ = best_rank_r(R, rr)
    else:
        R = 0.5 * (R + R.T)
        if kind == "symmetric":
            b, s, _ = best_rank_r_symmetric(R, rr)
        else:
            b, _ = best_rank_r_psd(R, rr)
            s = np.ones(rr)
        c = b * s
        signs = np.ones(r)
        signs[:rr] = s
    if rr < r:
        b = np.hstack([b, np.zeros((mk, r - rr))])
        c = np.hstack([c, np.zeros((nk, r - rr))])
    return b, c, signs


def _update_level(A_c, A_hat, mlr: MlrMatrix, level: int, state: dict, monitor) -> None:
    r_l = int(mlr.ranks[level])
    if r_l == 0:
        return
    cs = mlr.level_slice(level)
    track = _descent_checking or monitor is not None
    for k, rs, cl in mlr.partition.blocks(level):
        old = mlr.B[rs, cs] @ mlr.C[cl, cs].T
        cur = A_c[rs, cl] - A_hat[rs, cl]
        R = cur + old
        b, c, s = solve_block(R, r_l, mlr.kind)
        new = b @ c.T
        A_hat[rs, cl] += new - old
        mlr.B[rs, cs] = b
        mlr.C[cl, cs] = c
        if s is not None:
            mlr.signs[level][k] = s
        if track:
            delta = float(np.sum((R - new) ** 2) - np.sum(cur * cur))
            if _descent_checking and delta > DESCENT_SLACK * state["norm2"]:
                raise DescentViolation(
                    f"block ({level}, {k}) update increased the objective by {delta:.3e}"
                )
            state["obj"] += delta
            if monitor is not None:
                monitor(level, k, state["obj"])


def _zero(mlr: MlrMatrix) -> None:
    mlr.B[:] = 0.0
    mlr.C[:] = 0.0
    if mlr.signs is not None:
        for s in mlr.signs:
            s[:] = 1.0


def bcd_fit(A, mlr: MlrMatrix, cfg: FitConfig | None = None,
            monitor: Callable[[int, int, float], None] | None = None) -> FitReport:
    """Fit the factors of ``mlr`` (in place) to ``A`` by block coordinate descent.

    ``monitor(level, block, objective)`` is called after every block update with
    the current squared Frobenius error.
    """
    cfg = cfg or FitConfig()
    t0 = time.perf_counter()
    validate(mlr)
    A = check_target(A, mlr)
    A_c = permute_to_contiguous(A, mlr.partition)
    L = mlr.num_levels
    if cfg.init != "given":
        _zero(mlr)
    A_hat = contiguous_dense(mlr)
    state = {"norm2": float(np.sum(A_c * A_c))}
    state["obj"] = float(np.sum((A_c - A_hat) ** 2))
    last = None
    if cfg.init == "bcd_single_sweep":
        for l in range(L):
            _update_level(A_c, A_hat, mlr, l, state, monitor)
            last = l
    alloc = tuple(int(r) for r in mlr.ranks)
    report = FitReport(rel_errors=[_rel(A_c, A_hat)], ranks=[alloc])
    for _ in range(cfg.max_epochs):
        for l in v_order(L):
            # an immediate repeat of the level just solved would reproduce it exactly
            if l == last:
                continue
            _update_level(A_c, A_hat, mlr, l, state, monitor)
            last = l
        A_hat = contiguous_dense(mlr)
        state["obj"] = float(np.sum((A_c - A_hat) ** 2))
        report.rel_errors.append(_rel(A_c, A_hat))
        report.ranks.append(alloc)
        report.epochs_run += 1
        if stopping_check(report.rel_errors[-2], report.rel_errors[-1], cfg.eps_rel):
            report.termination = "converged"
            break
    report.wall_time = time.perf_counter() - t0
    return report


def _cg_rows(H: np.ndarray, rhs: np.ndarray, X: np.ndarray, steps: int) -> np.ndarray:
    """Run ``steps`` CG iterations on ``x_i H = rhs_i`` for every row ``i`` (warm start ``X``)."""
    X = X.copy()
    R = rhs - X @ H
    P = R.copy()
    rs = np.einsum("ij,ij->i", R, R)
    hnorm = np.linalg.norm(H, 2) if H.size else 0.0
    for _ in range(steps):
        HP = P @ H
        pHp = np.einsum("ij,ij->i", P, HP)
        pp = np.einsum("ij,ij->i", P, P)
        ok = pHp > 1e-14 * hnorm * pp
        if not np.any(ok):
            break
        alpha = np.where(ok, rs / np.where(ok, pHp, 1.0), 0.0)
        X += alpha[:, None] * P
        R -= alpha[:, None] * HP
        rs_new = np.einsum("ij,ij->i", R, R)
        beta = np.where(rs > 0, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        P = R + beta[:, None] * P
        rs = rs_new
    return X


def _level_block_index(offsets: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.searchsorted(offsets, starts, side="right") - 1


def _als_half(target, X, Y, x_offsets, y_offsets, ranks, steps):
    """Minimize ``||target - X~ Y~^T||`` over the rows of ``X`` with ``Y`` fixed.

    Rows sharing a finest-level block share one normal matrix ``G^T G`` where
    ``G`` is ``Y`` with entries outside the row's column block (per level) zeroed.
    """
    L = len(ranks)
    bounds = np.concatenate([[0], np.cumsum(ranks)])
    leaf = x_offsets[L - 1]
    X_new = X.copy()
    for lam in range(len(leaf) - 1):
        r0, r1 = int(leaf[lam]), int(leaf[lam + 1])
        G = np.zeros_like(Y)
        for l in range(L):
            if ranks[l] == 0:
                continue
            k = _level_block_index(x_offsets[l], np.array([r0]))[0]
            c0, c1 = int(y_offsets[l][k]), int(y_offsets[l][k + 1])
            G[c0:c1, bounds[l]:bounds[l + 1]] = Y[c0:c1, bounds[l]:bounds[l + 1]]
        H = G.T @ G
        rhs = target[r0:r1] @ G
        X_new[r0:r1] = _cg_rows(H, rhs, X[r0:r1], steps)
    return X_new


def als_fit(A, mlr: MlrMatrix, cfg: FitConfig | None = None,
            monitor: Callable[[str, float], None] | None = None) -> FitReport:
    """Fit the factors of a general ``mlr`` (in place) by alternating least squares.

    Each iteration approximately minimizes over all left factors (right factors
    fixed), then over all right factors, using ``cfg.cg_steps`` CG iterations.
    ``monitor(side, objective)`` is called after each half step. Note that all
    zero factors are a stationary point, so ``init="zeros"`` never moves;
    ``bcd_single_sweep`` is the usual starting point.
    """
    cfg = cfg or FitConfig(init="bcd_single_sweep")
    t0 = time.perf_counter()
    validate(mlr)
    if mlr.kind != "general":
        raise ValueError("ALS factor fitting supports general MLR matrices only")
    A = check_target(A, mlr)
    part = mlr.partition
    A_c = permute_to_contiguous(A, part)
    L = mlr.num_levels
    if cfg.init != "given":
        _zero(mlr)
    if cfg.init == "bcd_single_sweep":
        A_hat = contiguous_dense(mlr)
        state = {"norm2": float(np.sum(A_c * A_c)), "obj": 0.0}
        for l in range(L):
            _update_level(A_c, A_hat, mlr, l, state, None)
    row_off = [part.row_offsets(l) for l in range(L)]
    col_off = [part.col_offsets(l) for l in range(L)]
    ranks = [int(r) for r in mlr.ranks]
    alloc = tuple(ranks)
    report = FitReport(rel_errors=[_rel(A_c, contiguous_dense(mlr))], ranks=[alloc])
    for _ in range(cfg.max_epochs):
        mlr.B = _als_half(A_c, mlr.B, mlr.C, row_off, col_off, ranks, cfg.cg_steps)
        if monitor is not None:
            monitor("B", float(np.sum((A_c - contiguous_dense(mlr)) ** 2)))
        mlr.C = _als_half(A_c.T, mlr.C, mlr.B, col_off, row_off, ranks, cfg.cg_steps)
        A_hat = contiguous_dense(mlr)
        if monitor is not None:
            monitor("C", float(np.sum((A_c - A_hat) ** 2)))
        report.rel_errors.append(_rel(A_c, A_hat))
        report.ranks.append(alloc)
        report.epochs_run += 1
        if stopping_check(report.rel_errors[-2], report.rel_errors[-1], cfg.eps_rel):
            report.termination = "converged"
            break
    report.wall_time = time.perf_counter() - t0
    return report
