"""Exact best low rank approximants (general, symmetric, PSD) and partial spectra.

Dense LAPACK decompositions are used for small problems. For large matrices with
a small target rank (``r <= min(m, n) / 4`` and ``min(m, n) > 256``) ARPACK is
used instead, warm-startable through ``v0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .exceptions import ConvergenceFailure, NotSymmetric, RankTooLarge

ITERATIVE_MIN_DIM = 256
ITERATIVE_TOL = 1e-10


@dataclass
class TruncatedSvd:
    singular_values: np.ndarray
    U: np.ndarray
    V: np.ndarray


def _use_iterative(r: int, m: int, n: int) -> bool:
    k = min(m, n)
    return r > 0 and k > ITERATIVE_MIN_DIM and r <= k // 4


def _start_vector(size: int) -> np.ndarray:
    # fixed ARPACK start keeps results reproducible run to run
    return np.random.default_rng(0).standard_normal(size)


def _check_rank(r, limit):
    if r < 0 or r > limit:
        raise RankTooLarge(f"rank {r} outside [0, {limit}]")


def truncated_svd(A, k: int, v0=None, method: str = "auto") -> TruncatedSvd:
    """Leading ``k`` singular triplets, sorted non-increasing."""
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    _check_rank(k, min(m, n))
    if k == 0:
        return TruncatedSvd(np.zeros(0), np.zeros((m, 0)), np.zeros((n, 0)))
    if method == "iterative" or (method == "auto" and _use_iterative(k, m, n)):
        if k >= min(m, n):
            raise RankTooLarge("iterative SVD needs k < min(m, n)")
        if v0 is None:
            v0 = _start_vector(min(m, n))
        try:
            U, s, Vt = spla.svds(A, k=k, tol=ITERATIVE_TOL, maxiter=1000 * k, v0=v0,
                                 solver="arpack")
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        order = np.argsort(s)[::-1]
        return TruncatedSvd(s[order], U[:, order], Vt[order].T)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return TruncatedSvd(s[:k], U[:, :k], Vt[:k].T)


def top_singular_values(A, k: int, method: str = "auto") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if k < 1 or k > min(m, n):
        raise RankTooLarge(f"k={k} outside [1, {min(m, n)}]")
    if method == "iterative" or (method == "auto" and _use_iterative(k, m, n)):
        if k >= min(m, n):
            raise RankTooLarge("iterative SVD needs k < min(m, n)")
        try:
            s = spla.svds(A, k=k, tol=ITERATIVE_TOL, maxiter=1000 * k,
                          v0=_start_vector(min(m, n)), return_singular_vectors=False,
                          solver="arpack")
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        return np.sort(s)[::-1]
    return np.linalg.svd(A, compute_uv=False)[:k]


def best_rank_r(A, r: int, v0=None):
    """Frobenius-optimal rank ``r`` factors ``(B, C, err2)`` with ``A ~ B @ C.T``.

    The singular values are split evenly, ``B = U_r S_r^{1/2}``,
    ``C = V_r S_r^{1/2}``; ``err2`` is the squared error of the approximant.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    _check_rank(r, min(m, n))
    total = float(np.sum(A * A))
    if r == 0:
        return np.zeros((m, 0)), np.zeros((n, 0)), total
    if _use_iterative(r, m, n):
        t = truncated_svd(A, r, v0=v0, method="iterative")
        s = t.singular_values
        err2 = max(total - float(np.sum(s * s)), 0.0)
    else:
        U, s_all, Vt = np.linalg.svd(A, full_matrices=False)
        t = TruncatedSvd(s_all[:r], U[:, :r], Vt[:r].T)
        s = t.singular_values
        err2 = float(np.sum(s_all[r:] ** 2))
    root = np.sqrt(s)
    return t.U * root, t.V * root, err2


def _check_symmetric(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"matrix of shape {A.shape} is not square")
    nrm = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-8 * nrm:
        raise NotSymmetric("matrix is not symmetric")
    return 0.5 * (A + A.T)


def _eig(A, r, which):
    n = A.shape[0]
    if _use_iterative(r, n, n) and r < n:
        try:
            w, Q = spla.eigsh(A, k=r, which=which, tol=ITERATIVE_TOL, maxiter=1000 * r,
                              v0=_start_vector(n))
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        return w, Q, True
    w, Q = np.linalg.eigh(A)
    return w, Q, False


def best_rank_r_symmetric(A, r: int):
    """Best symmetric rank ``r`` approximant ``B diag(signs) B.T``; returns ``(B, signs, err2)``.

    Eigenvalues are ranked by absolute value; a zero eigenvalue gets sign +1.
    """
    A = _check_symmetric(A)
    n = A.shape[0]
    _check_rank(r, n)
    total = float(np.sum(A * A))
    if r == 0:
        return np.zeros((n, 0)), np.zeros(0), total
    w, Q, partial = _eig(A, r, "LM")
    order = np.argsort(-np.abs(w), kind="stable")
    w, Q = w[order], Q[:, order]
    lam = w[:r]
    if partial:
        err2 = max(total - float(np.sum(lam * lam)), 0.0)
    else:
        err2 = float(np.sum(w[r:] ** 2))
    signs = np.where(lam < 0, -1.0, 1.0)
    return Q[:, :r] * np.sqrt(np.abs(lam)), signs, err2


def best_rank_r_psd(A, r: int):
    """Best PSD approximant ``B B.T`` of rank at most ``r``; returns ``(B, err2)``.

    Uses the ``r`` algebraically largest eigenvalues clipped at zero.
    """
    A = _check_symmetric(A)
    n = A.shape[0]
    _check_rank(r, n)
    total = float(np.sum(A * A))
    if r == 0:
        return np.zeros((n, 0)), total
    w, Q, partial = _eig(A, r, "LA")
    order = np.argsort(-w, kind="stable")
    w, Q = w[order], Q[:, order][:, :r]
    lam = np.maximum(w[:r], 0.0)
    if partial:
        err2 = max(total - float(np.sum(lam * lam)), 0.0)
    else:
        err2 = float(np.sum(np.minimum(w[:r], 0.0) ** 2) + np.sum(w[r:] ** 2))
    return Q * np.sqrt(lam), err2
