"""Multilevel low rank (MLR) matrix approximation."""
from .core import (
    HierPartition,
    MlrMatrix,
    OpCount,
    factor_form,
    matvec,
    matvec_adjoint,
    permute_from_contiguous,
    permute_to_contiguous,
    storage_count,
    to_dense,
    transpose,
    validate,
    validate_partition,
)
from .estimator import MLRApproximator
from .exceptions import *  # noqa: F401,F403
from .fitting import FitConfig, FitReport, als_fit, bcd_fit, descent_check, rel_error
from .lowrank import best_rank_r, best_rank_r_psd, best_rank_r_symmetric, top_singular_values
from .partition import (
    Dissection,
    build_hierarchy,
    dissect_bipartite,
    dissect_symmetric,
    greedy_refine,
    split_block,
)
from .pipeline import baseline_lr, baseline_lrd, fit, fit_best_of_inits
from .rankalloc import ExchangeCandidate, allocate_ranks, level_deltas, rank_exchange_step

__version__ = "0.1.0"
