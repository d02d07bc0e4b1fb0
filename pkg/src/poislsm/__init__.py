"""Semiparametric estimation for longitudinal Poisson latent-space networks.

Counts between node pairs over time are modeled as independent Poissons with
log-intensity ``alpha_it + alpha_jt + <z_i, z_j>``: static latent positions
plus node-by-time baseline heterogeneity. The package provides simulation,
a two-stage initializer, the efficient-score one-step estimator, a
nuclear-norm penalized MLE over the interaction matrix, alignment metrics,
an experiment harness, and trip-log ingestion.
"""

from .errors import (
    ConditioningError,
    ConvergenceError,
    IngestError,
    NumericOverflowError,
    NumericsWarning,
    RankError,
    ShapeError,
)
from .evaluation import AlignmentResult, elementwise_error, g_error, procrustes, slope_fit
from .experiment import ExperimentSpec, FitReport, fit_real, mean_baseline_level, run_experiment
from .ingest import IngestConfig, TripRecord, ingest_csv, ingest_trips
from .initialization import (
    InitConfig,
    InitResult,
    estimate_bounds,
    init_alpha,
    init_stage1,
    init_stage2_pgd,
    initialize,
    usvt_denoise,
)
from .model import (
    EfficientSystem,
    efficient_system,
    fisher_blocks,
    log_likelihood,
    natural_params,
    score,
)
from .onestep import OneStepConfig, effective_basis, null_space_basis, one_step
from .penalized import (
    PmleConfig,
    alpha_profile,
    penalized_mle,
    penalty_level,
    project_constraints,
    rank_select,
    z_from_g,
)
from .simulate import SimConfig, SimData, gen_alpha, gen_latent, sample_counts, simulate_dataset
from .types import CountTensor, ModelBounds

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "ConditioningError",
    "ConvergenceError",
    "CountTensor",
    "EfficientSystem",
    "ExperimentSpec",
    "FitReport",
    "IngestConfig",
    "IngestError",
    "InitConfig",
    "InitResult",
    "ModelBounds",
    "NumericOverflowError",
    "NumericsWarning",
    "OneStepConfig",
    "PmleConfig",
    "RankError",
    "ShapeError",
    "SimConfig",
    "SimData",
    "TripRecord",
    "alpha_profile",
    "effective_basis",
    "efficient_system",
    "elementwise_error",
    "estimate_bounds",
    "fisher_blocks",
    "fit_real",
    "g_error",
    "gen_alpha",
    "gen_latent",
    "ingest_csv",
    "ingest_trips",
    "init_alpha",
    "init_stage1",
    "init_stage2_pgd",
    "initialize",
    "log_likelihood",
    "mean_baseline_level",
    "natural_params",
    "null_space_basis",
    "one_step",
    "penalized_mle",
    "penalty_level",
    "procrustes",
    "project_constraints",
    "rank_select",
    "run_experiment",
    "sample_counts",
    "score",
    "simulate_dataset",
    "slope_fit",
    "usvt_denoise",
    "z_from_g",
]
