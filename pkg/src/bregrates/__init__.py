"""Convex p-homogeneous regularisation for tomography from randomly sampled angles.

The package covers a discrete parallel-beam Radon transform, an orthonormal
2-D Haar transform, weighted ``l^p`` penalties with closed-form proximal maps,
proximal gradient descent with Barzilai-Borwein steps, ground truths that
satisfy a source condition exactly, and a Monte-Carlo harness that measures
how fast the expected Bregman distance decays with the number of angles.
"""

__version__ = "0.1.0"

from .core import (
    AngleSet,
    CapabilityError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    RngSeed,
    dot,
    gaussian_noise,
    sample_angles,
    weighted_residual_norm_sq,
)
from .diagnostics import (
    adjoint_mismatch,
    besov_assumption_sum,
    effective_dimension,
    mass_defect,
    script_R_quadratic,
)
from .experiments import (
    AlphaSchedule,
    ExperimentPlan,
    NoiseRegime,
    RateFitResult,
    calibrate_c_alpha,
    fit_monomial,
    make_plan,
    run_realization,
    run_sweep,
)
from .penalty import (
    Penalty,
    bregman,
    eval_R,
    eval_R_star,
    make_penalty,
    prox,
    subgradient,
)
from .phantom import builtin_phantom, ellipses_phantom
from .radon import RadonOperator, SubsampledRadon, estimate_op_norm
from .solver import SolveResult, SolverConfig, apriori_check, objective, pgd_solve
from .source_condition import SourceConditionResult, cgls_ridge, project_to_source_condition
from .wavelet import AnalysisTransform, analysis, haar, identity, synthesis

__all__ = [
    "AlphaSchedule",
    "AnalysisTransform",
    "AngleSet",
    "CapabilityError",
    "ConvergenceError",
    "DimensionError",
    "DivergenceError",
    "ExperimentPlan",
    "NoiseRegime",
    "Penalty",
    "RadonOperator",
    "RateFitResult",
    "RngSeed",
    "SolveResult",
    "SolverConfig",
    "SourceConditionResult",
    "SubsampledRadon",
    "adjoint_mismatch",
    "analysis",
    "apriori_check",
    "besov_assumption_sum",
    "bregman",
    "builtin_phantom",
    "calibrate_c_alpha",
    "cgls_ridge",
    "dot",
    "effective_dimension",
    "ellipses_phantom",
    "estimate_op_norm",
    "eval_R",
    "eval_R_star",
    "fit_monomial",
    "gaussian_noise",
    "haar",
    "identity",
    "make_penalty",
    "make_plan",
    "mass_defect",
    "objective",
    "pgd_solve",
    "project_to_source_condition",
    "prox",
    "run_realization",
    "run_sweep",
    "sample_angles",
    "script_R_quadratic",
    "subgradient",
    "synthesis",
    "weighted_residual_norm_sq",
]
