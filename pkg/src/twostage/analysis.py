"""One-call estimation: point, variance, and interval together."""
from __future__ import annotations

import numpy as np

from .errors import EstimationError, StructuralError
from .estimate import (
    estimate_hajek,
    estimate_model_assisted,
    estimate_post_stratified,
    estimate_simple_difference,
    estimate_unbiased,
)
from .model import (
    EffectEstimate,
    EffectKind,
    EstimatorFamily,
    ObservedData,
    StrataSpec,
    WeightScheme,
)
from .regress import aggregate_regression, overall_regression
from .variance import (
    confidence_interval,
    variance_hajek,
    variance_model_assisted,
    variance_post_stratified,
    variance_unbiased,
)

__all__ = ["analyze"]


def analyze(data: ObservedData, scheme: WeightScheme, effect: EffectKind,
            family: EstimatorFamily, *, ci_level: float = 0.95,
            strata: StrataSpec | None = None,
            adjustment: np.ndarray | None = None,
            require_variance: bool = True) -> EffectEstimate:
    """Estimate one effect with one estimator, variance included.

    ``strata`` is required for the post-stratified family and
    ``adjustment`` (a fitted outcome-model coefficient vector, intercept
    first) for the model-assisted family.  The simple-difference family
    reports a point estimate only.  With ``require_variance=False`` a
    design too small to support a variance estimate (fewer than two
    treated or two control households) yields a point-only estimate
    instead of an error; failures to compute the point itself always
    raise.
    """
    if family is EstimatorFamily.UNBIASED:
        point = estimate_unbiased(data, scheme, effect)
        variance = lambda: variance_unbiased(data, scheme, effect)
    elif family is EstimatorFamily.HAJEK:
        point = estimate_hajek(data, scheme, effect)
        variance = lambda: variance_hajek(data, scheme, effect)
    elif family is EstimatorFamily.SIMPLE_DIFFERENCE:
        return estimate_simple_difference(data, effect)
    elif family is EstimatorFamily.POST_STRATIFIED:
        if strata is None:
            raise StructuralError(
                "post-stratified estimation requires strata")
        point = estimate_post_stratified(data, scheme, effect, strata)
        variance = lambda: variance_post_stratified(data, scheme, effect,
                                                    strata)
    elif family is EstimatorFamily.MODEL_ASSISTED:
        if adjustment is None:
            raise StructuralError(
                "model-assisted estimation requires a fitted adjustment")
        point = estimate_model_assisted(data, scheme, effect, adjustment)
        variance = lambda: variance_model_assisted(data, scheme, effect,
                                                   adjustment)
    elif family is EstimatorFamily.REGRESSION:
        if effect is EffectKind.OVERALL:
            fit = overall_regression(data, scheme)
        else:
            fit = aggregate_regression(data, scheme)
        return fit.effect_estimate(effect, ci_level)
    else:
        raise StructuralError(f"unknown estimator family {family!r}")
    try:
        var = variance()
    except EstimationError:
        if require_variance:
            raise
        return EffectEstimate(effect, point.scheme, family, point.point)
    interval = confidence_interval(point.point, var, ci_level)
    return EffectEstimate(effect, point.scheme, family, point.point, var,
                          ci_level, interval)
