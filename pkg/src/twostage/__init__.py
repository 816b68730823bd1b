"""Design-based analysis of two-stage randomized household experiments.

Households are randomized to treatment, then one member of each treated
household is randomized to receive the intervention directly.  The
package estimates the direct (primary), within-household spillover, and
overall effects under household or individual weighting, provides
conservative variance estimates with matching regression formulations,
and ships the Monte Carlo studies that document when naive alternatives
fail.
"""
from __future__ import annotations

from .analysis import analyze
from .diagnostics import IdentityCheck, identity_checks
from .errors import (
    CapacityError,
    EstimationError,
    ParseError,
    StructuralError,
    TwoStageError,
)
from .estimate import (
    estimate_hajek,
    estimate_model_assisted,
    estimate_post_stratified,
    estimate_simple_difference,
    estimate_unbiased,
    fit_adjustment,
    residualize,
    split_holdout,
)
from .model import (
    Assignment,
    EffectEstimate,
    EffectKind,
    EstimatorFamily,
    ExperimentDesign,
    ObservedData,
    PotentialOutcomeTable,
    StrataSpec,
    WeightScheme,
    inclusion_weights,
    transform_factor,
    true_effect,
)
from .randomize import (
    SeededRng,
    assignment_probability,
    count_assignments,
    draw_assignment,
    enumerate_assignments,
)
from .regress import aggregate_regression, individual_regression, overall_regression
from .simulate import (
    CoverageStudyConfig,
    SizeBiasStudyConfig,
    StudyResult,
    run_coverage_study,
    run_size_bias_study,
)
from .variance import (
    VarianceComponents,
    confidence_interval,
    conservative_gap,
    naive_variance_gap,
    naive_variance_threshold,
    normal_quantile,
    simple_difference_bias,
    theoretical_variance,
    variance_components,
    variance_hajek,
    variance_model_assisted,
    variance_post_stratified,
    variance_unbiased,
)

__version__ = "0.1.0"

__all__ = [
    "analyze",
    "IdentityCheck", "identity_checks",
    "TwoStageError", "StructuralError", "ParseError", "CapacityError",
    "EstimationError",
    "ExperimentDesign", "Assignment", "PotentialOutcomeTable", "ObservedData",
    "WeightScheme", "EffectKind", "EstimatorFamily", "EffectEstimate",
    "StrataSpec", "true_effect", "inclusion_weights", "transform_factor",
    "SeededRng", "draw_assignment", "count_assignments",
    "assignment_probability", "enumerate_assignments",
    "estimate_unbiased", "estimate_hajek", "estimate_simple_difference",
    "estimate_post_stratified", "estimate_model_assisted", "split_holdout",
    "fit_adjustment", "residualize",
    "variance_unbiased", "variance_hajek", "variance_post_stratified",
    "variance_model_assisted", "VarianceComponents", "variance_components",
    "theoretical_variance", "conservative_gap", "simple_difference_bias",
    "naive_variance_gap", "naive_variance_threshold", "normal_quantile",
    "confidence_interval",
    "individual_regression", "aggregate_regression", "overall_regression",
    "CoverageStudyConfig", "SizeBiasStudyConfig", "StudyResult",
    "run_coverage_study", "run_size_bias_study",
]
