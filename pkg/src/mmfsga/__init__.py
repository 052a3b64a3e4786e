"""Multi-view multi-objective genetic feature selection."""

__version__ = "0.1.0"

from .data import MultiViewDataset, SyntheticSpec, bayes_error_mc, conditional_pmc, generate_synthetic
from .evaluation import CVFitness, cv_error, fit_lda, fit_mlr, make_fold_plan
from .moo import crowding_distance, dominates, environmental_selection, fast_nondominated_sort
from .search import NicheConfig, run_bvfs, run_ivfs, run_mmfs_ga
from .variation import VariationConfig, crossover_or_mutation

__all__ = [
    "CVFitness",
    "MultiViewDataset",
    "NicheConfig",
    "SyntheticSpec",
    "VariationConfig",
    "bayes_error_mc",
    "conditional_pmc",
    "crossover_or_mutation",
    "crowding_distance",
    "cv_error",
    "dominates",
    "environmental_selection",
    "fast_nondominated_sort",
    "fit_lda",
    "fit_mlr",
    "generate_synthetic",
    "make_fold_plan",
    "run_bvfs",
    "run_ivfs",
    "run_mmfs_ga",
]
