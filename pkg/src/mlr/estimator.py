"""scikit-learn style wrapper around :func:`mlr.pipeline.fit`."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import matvec, matvec_adjoint, storage_count, to_dense
from .fitting import rel_error
from .pipeline import fit


class MLRApproximator(TransformerMixin, BaseEstimator):
    """Fit a multilevel low rank approximation of a fixed matrix ``A``.

    ``fit(A)`` learns the factors. ``transform(X)`` then applies the
    approximation to the rows of ``X`` (shape ``(k, n)``), returning
    ``X @ A_hat.T`` of shape ``(k, m)``.

    Attributes set by ``fit``: ``mlr_``, ``partition_``, ``ranks_``,
    ``report_``, ``rel_error_``, ``storage_``, ``n_features_in_``.
    """

    def __init__(self, rank=16, kind="general", mode="full_fit", init="uniform", levels=None,
                 partition=None, eps_rel=0.01, eps_alloc=1e-3, max_epochs=100, q=1,
                 max_swaps=5000, method="bcd"):
        self.rank = rank
        self.kind = kind
        self.mode = mode
        self.init = init
        self.levels = levels
        self.partition = partition
        self.eps_rel = eps_rel
        self.eps_alloc = eps_alloc
        self.max_epochs = max_epochs
        self.q = q
        self.max_swaps = max_swaps
        self.method = method

    def fit(self, A, y=None):
        A = check_array(A, dtype=np.float64, ensure_min_samples=1, ensure_min_features=1)
        if not isinstance(self.rank, (int, np.integer)) or self.rank < 1:
            raise ValueError("rank must be a positive integer")
        self.mlr_, self.report_ = fit(
            A, int(self.rank), kind=self.kind, mode=self.mode, init=self.init,
            levels=self.levels, partition=self.partition, eps_rel=self.eps_rel,
            eps_alloc=self.eps_alloc, max_epochs=self.max_epochs, q=self.q,
            max_swaps=self.max_swaps, method=self.method,
        )
        self.partition_ = self.mlr_.partition
        self.ranks_ = self.mlr_.ranks.copy()
        self.rel_error_ = self.report_.final_error
        self.storage_ = storage_count(self.mlr_)
        self.n_features_in_ = A.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mlr_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return matvec(self.mlr_, X.T).T

    def inverse_transform(self, Y):
        """Apply the adjoint: rows of ``Y`` (length ``m``) map to ``Y @ A_hat``."""
        check_is_fitted(self, "mlr_")
        Y = check_array(Y, dtype=np.float64)
        return matvec_adjoint(self.mlr_, Y.T).T

    def score(self, A, y=None) -> float:
        """Negative relative Frobenius error of the fitted approximation against ``A``."""
        check_is_fitted(self, "mlr_")
        return -rel_error(check_array(A, dtype=np.float64), self.mlr_)

    def to_dense(self) -> np.ndarray:
        check_is_fitted(self, "mlr_")
        return to_dense(self.mlr_)
