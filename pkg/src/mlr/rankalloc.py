"""Rank allocation by predicted-gain rank exchange between levels.

For every level ``l`` the block residuals ``R_{l,k}`` (target minus all other
levels) predict how much the squared error changes when the rank of level ``l``
moves by ``q``:

    gain(l) = sum_k sum_{j=1..q} sigma_{r_l + j}(R_{l,k})^2
    loss(l) = sum_k sum_{j=1..q} sigma_{r_l - j + 1}(R_{l,k})^2

An exchange moves ``q`` units from the level with the smallest loss to the level
with the largest gain, refits by warm-started BCD, and is kept only if the
error went down.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MlrMatrix, contiguous_dense, permute_to_contiguous, validate
from .exceptions import DimensionMismatch, NoFeasibleExchange
from .fitting import FitConfig, FitReport, bcd_fit, check_target, solve_block, stopping_check


@dataclass(frozen=True)
class ExchangeCandidate:
    gain_level: int
    loss_level: int
    units: int
    predicted_net: float


def residual_blocks(A_c: np.ndarray, mlr: MlrMatrix) -> list[list[np.ndarray]]:
    """``R_{l,k}``: block ``k`` of ``A_c - sum_{j != l} A^j`` for every level."""
    A_hat = contiguous_dense(mlr)
    out = []
    for l in range(mlr.num_levels):
        cs = mlr.level_slice(l)
        blocks = []
        for _, rs, cl in mlr.partition.blocks(l):
            R = A_c[rs, cl] - A_hat[rs, cl]
            if cs.stop > cs.start:
                R = R + mlr.B[rs, cs] @ mlr.C[cl, cs].T
            blocks.append(R)
        out.append(blocks)
    return out


def _spectrum(R: np.ndarray, kind: str) -> np.ndarray:
    # magnitudes whose squares give the error change per unit of rank
    if kind == "psd":
        w = np.linalg.eigvalsh(0.5 * (R + R.T))
        return np.maximum(w[::-1], 0.0)
    return np.linalg.svd(R, compute_uv=False)


def level_deltas(residuals, ranks, q: int = 1, kind: str = "general"):
    """Predicted error decrease ``gain`` and increase ``loss`` for moving ``q`` units.

    ``loss[l]`` is ``inf`` when ``ranks[l] < q``. Singular values past the block
    dimensions count as zero.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    if len(residuals) != ranks.size:
        raise DimensionMismatch(f"{len(residuals)} residual levels for {ranks.size} ranks")
    if q < 1:
        raise ValueError("q must be at least 1")
    L = ranks.size
    gain, loss = np.zeros(L), np.zeros(L)
    for l, blocks in enumerate(residuals):
        r = int(ranks[l])
        for R in blocks:
            s2 = _spectrum(R, kind) ** 2
            pad = np.concatenate([s2, np.zeros(max(0, r + q - s2.size))])
            gain[l] += pad[r:r + q].sum()
            if r >= q:
                loss[l] += pad[r - q:r].sum()
        if r < q:
            loss[l] = np.inf
    return gain, loss


def _truncate_block(B, C, signs, r_new, kind):
    """Best rank ``r_new`` approximant of the block ``B C^T`` in factored form."""
    Qb, Rb = np.linalg.qr(B)
    if kind == "general":
        Qc, Rc = np.linalg.qr(C)
        b, c, s = solve_block(Rb @ Rc.T, r_new, kind)
        return Qb @ b, Qc @ c, None
    b, c, s = solve_block((Rb * signs) @ Rb.T, r_new, kind)
    return Qb @ b, Qb @ c, s


def apply_exchange(mlr: MlrMatrix, residuals, gain_level: int, loss_level: int,
                   q: int = 1) -> MlrMatrix:
    """New MLR matrix with ``q`` rank units moved from ``loss_level`` to ``gain_level``.

    The gaining level is refit to the best rank ``r + q`` approximant of its
    residual blocks; the losing level keeps the leading part of its current
    blocks.
    """
    part = mlr.partition
    ranks = mlr.ranks.copy()
    ranks[gain_level] += q
    ranks[loss_level] -= q
    out = MlrMatrix.zeros(part, ranks, mlr.kind)
    for l in range(mlr.num_levels):
        old_cs, new_cs = mlr.level_slice(l), out.level_slice(l)
        if l not in (gain_level, loss_level):
            out.B[:, new_cs] = mlr.B[:, old_cs]
            out.C[:, new_cs] = mlr.C[:, old_cs]
            if mlr.signs is not None:
                out.signs[l] = mlr.signs[l].copy()
            continue
        for k, rs, cl in part.blocks(l):
            if l == gain_level:
                b, c, s = solve_block(residuals[l][k], int(ranks[l]), mlr.kind)
            else:
                sk = None if mlr.signs is None else mlr.signs[l][k]
                b, c, s = _truncate_block(mlr.B[rs, old_cs], mlr.C[cl, old_cs], sk,
                                          int(ranks[l]), mlr.kind)
            out.B[rs, new_cs] = b
            out.C[cl, new_cs] = c
            if s is not None:
                out.signs[l][k] = s
    return out


def rank_candidates(gain, loss, ranks, q: int = 1) -> list[ExchangeCandidate]:
    """Feasible exchanges sorted by predicted net decrease (ties: smallest ``(i, j)``)."""
    L = len(ranks)
    cands = [
        ExchangeCandidate(i, j, q, float(gain[i] - loss[j]))
        for i in range(L) for j in range(L)
        if i != j and ranks[j] >= q
    ]
    cands.sort(key=lambda c: (-c.predicted_net, c.gain_level, c.loss_level))
    return cands


def rank_exchange_step(A, mlr: MlrMatrix, cfg: FitConfig | None = None, q: int = 1,
                       candidates: int = 1, epochs: int = 2):
    """Try the best predicted exchange(s); returns ``(accepted, candidate, report)``.

    Up to ``candidates`` exchanges are tried in order of predicted gain. Each is
    refit with ``epochs`` warm-started V-epochs of BCD and accepted only if the
    relative error strictly decreased. ``mlr`` is only modified on acceptance.
    """
    cfg = cfg or FitConfig(eps_rel=0.01)
    validate(mlr)
    A = check_target(A, mlr)
    if mlr.num_levels < 2:
        raise NoFeasibleExchange("rank exchange needs at least two levels")
    A_c = permute_to_contiguous(A, mlr.partition)
    nrm = np.linalg.norm(A_c) or 1.0
    before = float(np.linalg.norm(A_c - contiguous_dense(mlr)) / nrm)
    residuals = residual_blocks(A_c, mlr)
    gain, loss = level_deltas(residuals, mlr.ranks, q, mlr.kind)
    cands = rank_candidates(gain, loss, mlr.ranks, q)
    if not cands:
        raise NoFeasibleExchange(f"no level holds {q} unit(s) of rank to give away")
    fit_cfg = FitConfig(eps_rel=cfg.eps_rel, max_epochs=epochs, cg_steps=cfg.cg_steps,
                        init="given")
    result = None
    for cand in cands[:max(1, candidates)]:
        trial = apply_exchange(mlr, residuals, cand.gain_level, cand.loss_level, q)
        report = bcd_fit(A, trial, fit_cfg)
        if report.final_error < before:
            mlr.assign(trial)
            return True, cand, report
        result = (False, cand, report)
    return result


def allocate_ranks(A, mlr: MlrMatrix, cfg: FitConfig | None = None, q: int = 1,
                   max_exchanges: int = 100, candidates: int = 1, epochs: int = 2,
                   eps_alloc: float | None = None, polish_epochs: int = 0) -> FitReport:
    """Alternate BCD factor fitting and rank exchanges until an exchange is rejected.

    The initial fit uses ``cfg.init`` and ``epochs`` V-epochs. When ``eps_alloc``
    is given the loop also stops once an accepted exchange improves the relative
    error by at most ``eps_alloc`` (relative). ``report.allocations`` lists the
    allocation and error after the initial fit and after every accepted exchange.
    ``polish_epochs > 0`` finishes with a warm-started BCD fit at ``cfg.eps_rel``
    on the final allocation.
    """
    cfg = cfg or FitConfig(eps_rel=0.01)
    first = FitConfig(eps_rel=cfg.eps_rel, max_epochs=epochs, cg_steps=cfg.cg_steps,
                      init=cfg.init)
    report = bcd_fit(A, mlr, first)
    report.allocations = [(tuple(int(r) for r in mlr.ranks), report.final_error)]
    report.termination = "max_exchanges"
    for _ in range(max_exchanges):
        try:
            accepted, _, step = rank_exchange_step(A, mlr, cfg, q, candidates, epochs)
        except NoFeasibleExchange:
            report.termination = "no_feasible_exchange"
            break
        if not accepted:
            report.termination = "rejected"
            break
        prev = report.final_error
        report.extend(step, exchange=True)
        report.termination = "max_exchanges"
        report.allocations.append((tuple(int(r) for r in mlr.ranks), report.final_error))
        if eps_alloc is not None and stopping_check(prev, report.final_error, eps_alloc):
            report.termination = "converged"
            break
    if polish_epochs > 0:
        reason = report.termination
        report.extend(bcd_fit(A, mlr, FitConfig(eps_rel=cfg.eps_rel, max_epochs=polish_epochs,
                                                 cg_steps=cfg.cg_steps, init="given")))
        report.termination = reason
    return report
