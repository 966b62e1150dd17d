"""Sparse and low-rank screening of pairwise gene-gene interactions.

The package fits regression models whose symmetric interaction matrix is
constrained to low rank, screens terms with Wald statistics from that fit
followed by a Lasso, and runs the split-sample Extended Screen-and-Clean
pipeline (ESC) together with the plain Screen-and-Clean baseline (SC).
"""
from .design import (
    DesignMatrix,
    GenotypeData,
    TermIndex,
    build_design,
    column_to_pair,
    full_terms,
    n_terms,
    pair_to_column,
    read_genotype_csv,
    read_phenotype_csv,
    unvecp,
    vecp,
)
from .errors import (
    CleaningInfeasibleError,
    ConfigError,
    DivergenceError,
    GxGError,
    IngestionError,
    InsufficientSampleError,
    NumericalError,
    SingularDesignError,
)
from .lasso import cv_lasso, lambda_max, lasso_fit, lasso_path
from .lowrank import (
    FitOptions,
    FitResult,
    cv_lambda_ell,
    estimate_cov,
    estimate_sigma2,
    fit_lowrank,
    fit_rank1,
    fit_rank2k,
    penalized_loglik,
)
from .pipeline import EscConfig, EscResult, run_esc, split_data, step1_main_lasso, step2_screen, step3_clean
from .screen import ScreenConfig, SelectionModel, lr_screen, slr_screen
from .simulate import (
    MetricReport,
    SimSpec,
    TruthSet,
    benchmark_csv,
    compute_metrics,
    gen_genotypes,
    gen_trait,
    run_benchmark,
    simulate,
)
from .theta import LowRankTheta, effective_dim, jacobian_delta

__version__ = "0.1.0"

__all__ = [
    "benchmark_csv",
    "build_design",
    "CleaningInfeasibleError",
    "column_to_pair",
    "compute_metrics",
    "ConfigError",
    "cv_lambda_ell",
    "cv_lasso",
    "DesignMatrix",
    "DivergenceError",
    "effective_dim",
    "EscConfig",
    "EscResult",
    "estimate_cov",
    "estimate_sigma2",
    "fit_lowrank",
    "fit_rank1",
    "fit_rank2k",
    "FitOptions",
    "FitResult",
    "full_terms",
    "gen_genotypes",
    "gen_trait",
    "GenotypeData",
    "GxGError",
    "IngestionError",
    "InsufficientSampleError",
    "jacobian_delta",
    "lambda_max",
    "lasso_fit",
    "lasso_path",
    "LowRankTheta",
    "lr_screen",
    "MetricReport",
    "n_terms",
    "NumericalError",
    "pair_to_column",
    "penalized_loglik",
    "read_genotype_csv",
    "read_phenotype_csv",
    "run_benchmark",
    "run_esc",
    "ScreenConfig",
    "SelectionModel",
    "SimSpec",
    "simulate",
    "SingularDesignError",
    "slr_screen",
    "split_data",
    "step1_main_lasso",
    "step2_screen",
    "step3_clean",
    "TermIndex",
    "TruthSet",
    "unvecp",
    "vecp",
]
