"""Sparse VAR estimation and simulation under heavy-tailed innovations."""

from __future__ import annotations

from .model import (
    RegressionData,
    Trajectory,
    VarModel,
    VarxModel,
    build_companion,
    build_design,
    build_varx_companion,
)
from .sampling import (
    NoiseSpec,
    TransitionGenSpec,
    gen_lowrank_sparse_transition,
    gen_sparse_transition,
    sample_subweibull,
    simulate_var,
)
from .dependence import (
    DependenceReport,
    LinearProcessSpec,
    TruncationRule,
    dependence_factor,
    mu_bounds,
    op_norm,
    solve_lyapunov,
    spectral_density,
    spectral_radius,
    stability_factors,
)
from .penalties import (
    BoundBundle,
    GroupL21Penalty,
    KSupportPenalty,
    L1Penalty,
    NuclearPenalty,
    OwlPenalty,
    OwnOtherPenalty,
    Penalty,
    gaussian_width_unit_ball,
    lambda_theory,
    penalty_from_config,
    theory_bounds,
)
from .solvers import (
    FitResult,
    SolverConfig,
    dantzig_l1,
    fista_fit,
    lambda_zero_threshold,
    lowrank_sparse_fit,
    ols_fit,
    sample_size_theory,
)
from .estimators import (
    ErrorMetrics,
    LambdaRule,
    LowRankSparseVAR,
    SparseVAR,
    SparseVARX,
    eval_errors,
    fit_var,
    fit_var_lowrank_sparse,
    fit_varx,
    predict,
)

__version__ = "0.1.0"

__all__ = [
    "RegressionData",
    "Trajectory",
    "VarModel",
    "VarxModel",
    "build_companion",
    "build_design",
    "build_varx_companion",
    "NoiseSpec",
    "TransitionGenSpec",
    "gen_lowrank_sparse_transition",
    "gen_sparse_transition",
    "sample_subweibull",
    "simulate_var",
    "DependenceReport",
    "LinearProcessSpec",
    "TruncationRule",
    "dependence_factor",
    "mu_bounds",
    "op_norm",
    "solve_lyapunov",
    "spectral_density",
    "spectral_radius",
    "stability_factors",
    "BoundBundle",
    "GroupL21Penalty",
    "KSupportPenalty",
    "L1Penalty",
    "NuclearPenalty",
    "OwlPenalty",
    "OwnOtherPenalty",
    "Penalty",
    "gaussian_width_unit_ball",
    "lambda_theory",
    "penalty_from_config",
    "theory_bounds",
    "FitResult",
    "SolverConfig",
    "dantzig_l1",
    "fista_fit",
    "lambda_zero_threshold",
    "lowrank_sparse_fit",
    "ols_fit",
    "sample_size_theory",
    "ErrorMetrics",
    "LambdaRule",
    "LowRankSparseVAR",
    "SparseVAR",
    "SparseVARX",
    "eval_errors",
    "fit_var",
    "fit_var_lowrank_sparse",
    "fit_varx",
    "predict",
]
