"""Point estimators for the three effects.

All weighted estimators here share one reduction: multiplying outcomes
by the transform ``N * n_i * w_i`` (see
:func:`twostage.model.transform_factor`) turns the inverse-probability
weighted estimator of any effect into a plain difference of household
cell means,

* primary: mean over treated households of the directly treated
  member's transformed outcome, minus the mean over control households
  of the household mean,
* spillover: the same with the mean over untreated members of each
  treated household,
* overall: the same with the whole-household mean of treated households.

Household weighting makes the transform identically one, so that scheme
simply averages raw household means.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, StructuralError
from .model import (
    EffectEstimate,
    EffectKind,
    EstimatorFamily,
    ExperimentDesign,
    ObservedData,
    StrataSpec,
    WeightScheme,
    transform_factor,
)

__all__ = [
    "HouseholdCellStats",
    "household_cell_stats",
    "estimate_unbiased",
    "estimate_hajek",
    "estimate_simple_difference",
    "estimate_post_stratified",
    "stratum_decomposition",
    "split_holdout",
    "fit_adjustment",
    "residualize",
    "estimate_model_assisted",
]


@dataclass(frozen=True)
class HouseholdCellStats:
    """Per-household summaries of (transformed) observed outcomes.

    Treated-household arrays are aligned with ``treated`` (ascending
    household index), control arrays with ``control``.
    """

    treated: np.ndarray        # (N1,) household indices
    control: np.ndarray        # (N0,) household indices
    direct: np.ndarray         # (N1,) transformed outcome of the treated member
    spill_mean: np.ndarray     # (N1,) mean over untreated members
    whole_mean: np.ndarray     # (N1,) mean over all members
    control_mean: np.ndarray   # (N0,) mean over members
    factor_treated: np.ndarray # (N1,) per-household transform factor
    factor_control: np.ndarray # (N0,)
    sizes_treated: np.ndarray  # (N1,) int
    sizes_control: np.ndarray  # (N0,) int


def household_cell_stats(data: ObservedData,
                         scheme: WeightScheme | None) -> HouseholdCellStats:
    """Summarize outcomes by household and cell.

    ``scheme=None`` skips the transform (raw outcomes), which is what the
    simple-difference estimator uses.
    """
    design = data.design
    if scheme is None:
        y = data.outcome
        per_house_factor = np.ones(design.num_households)
    else:
        w = scheme.resolve(design)
        per_house_factor = design.num_households * design.household_sizes * w
        y = np.repeat(per_house_factor, design.household_sizes) * data.outcome
    offsets = design.household_offsets
    sums = np.add.reduceat(y, offsets[:-1])
    sizes = design.household_sizes
    assignment = data.assignment
    treated = assignment.treated_households
    control = assignment.control_households
    direct = y[offsets[treated] + assignment.treated_member[treated]]
    n_t = sizes[treated]
    spill_mean = (sums[treated] - direct) / (n_t - 1)
    whole_mean = sums[treated] / n_t
    control_mean = sums[control] / sizes[control]
    return HouseholdCellStats(
        treated=treated,
        control=control,
        direct=direct,
        spill_mean=spill_mean,
        whole_mean=whole_mean,
        control_mean=control_mean,
        factor_treated=per_house_factor[treated],
        factor_control=per_house_factor[control],
        sizes_treated=n_t,
        sizes_control=sizes[control],
    )


def _treated_cell(stats: HouseholdCellStats, effect: EffectKind) -> np.ndarray:
    if effect is EffectKind.PRIMARY:
        return stats.direct
    if effect is EffectKind.SPILLOVER:
        return stats.spill_mean
    if effect is EffectKind.OVERALL:
        return stats.whole_mean
    raise StructuralError(f"unknown effect {effect!r}")


def estimate_unbiased(data: ObservedData, scheme: WeightScheme,
                      effect: EffectKind) -> EffectEstimate:
    """Inverse-probability weighted estimator (design-unbiased).

    Equals the difference between the average treated-household cell
    mean and the average control-household mean of transformed outcomes.
    """
    stats = household_cell_stats(data, scheme)
    point = float(_treated_cell(stats, effect).mean() - stats.control_mean.mean())
    return EffectEstimate(effect, scheme.label, EstimatorFamily.UNBIASED, point)


def estimate_hajek(data: ObservedData, scheme: WeightScheme,
                   effect: EffectKind) -> EffectEstimate:
    """Ratio-normalized weighted estimator.

    Each cell total is divided by its realized weight total instead of
    the expected total, which makes the estimator invariant to shifting
    all outcomes by a constant.  Under equal household sizes it
    coincides with the unbiased estimator.
    """
    stats = household_cell_stats(data, scheme)
    f_t = stats.factor_treated.sum()
    f_c = stats.factor_control.sum()
    r_cell = float(_treated_cell(stats, effect).sum() / f_t)
    r_control = float(stats.control_mean.sum() / f_c)
    return EffectEstimate(effect, scheme.label, EstimatorFamily.HAJEK,
                          r_cell - r_control)


def estimate_simple_difference(data: ObservedData,
                               effect: EffectKind) -> EffectEstimate:
    """Unweighted difference of pooled individual-level cell means.

    This is what a naive regression of outcome on cell dummies reports.
    It ignores the unequal inclusion probabilities that household size
    induces, so with varying sizes it is biased for the
    individual-weighted estimand (its natural comparator, hence the
    ``"iw"`` scheme label); with equal sizes the bias is exactly zero.
    No variance is attached.
    """
    stats = household_cell_stats(data, None)
    pooled_control = float(
        (stats.sizes_control * stats.control_mean).sum() / stats.sizes_control.sum())
    if effect is EffectKind.PRIMARY:
        cell = float(stats.direct.mean())
    elif effect is EffectKind.SPILLOVER:
        weights = stats.sizes_treated - 1
        cell = float((weights * stats.spill_mean).sum() / weights.sum())
    elif effect is EffectKind.OVERALL:
        cell = float(
            (stats.sizes_treated * stats.whole_mean).sum() / stats.sizes_treated.sum())
    else:
        raise StructuralError(f"unknown effect {effect!r}")
    return EffectEstimate(effect, "iw", EstimatorFamily.SIMPLE_DIFFERENCE,
                          cell - pooled_control)


def stratum_decomposition(
    data: ObservedData, scheme: WeightScheme, strata: StrataSpec,
) -> list[tuple[int, float, ObservedData, WeightScheme]]:
    """Split the data into per-stratum subproblems.

    Each stratum ``k`` receives the pooled weight ``W_k = sum_{i in k}
    w_i * n_i`` and a custom within-stratum scheme with weights
    ``w_i / W_k``, so that stratum estimates recombine exactly:
    ``sum_k W_k * tau_k`` equals the full-population estimand.

    Returns
    -------
    list of ``(stratum_code, W_k, stratum_data, stratum_scheme)``.

    Raises
    ------
    EstimationError
        If a stratum has no treated or no control household in the
        realized assignment, which leaves its estimate undefined.
    """
    design = data.design
    if strata.labels.shape[0] != design.num_households:
        raise StructuralError("strata must label every household")
    w = scheme.resolve(design)
    share = w * design.household_sizes
    out = []
    for code in range(strata.num_strata):
        households = strata.households(code)
        weight = float(share[households].sum())
        try:
            sub = data.subset_households(households)
        except StructuralError as exc:
            raise EstimationError(
                f"stratum {strata.names[code]!r}: {exc}") from exc
        sub_scheme = WeightScheme.custom(w[households] / weight)
        out.append((code, weight, sub, sub_scheme))
    return out


def estimate_post_stratified(data: ObservedData, scheme: WeightScheme,
                             effect: EffectKind,
                             strata: StrataSpec) -> EffectEstimate:
    """Weighted recombination of within-stratum unbiased estimates.

    Conditions on the realized number of treated households per stratum,
    which removes the variance contributed by imbalance across strata
    (for size strata, the variation in how many large households end up
    treated).
    """
    point = 0.0
    for _, weight, sub, sub_scheme in stratum_decomposition(data, scheme, strata):
        point += weight * estimate_unbiased(sub, sub_scheme, effect).point
    return EffectEstimate(effect, scheme.label, EstimatorFamily.POST_STRATIFIED,
                          point)


def split_holdout(data: ObservedData, fraction: float, rng) -> tuple[ObservedData, ObservedData]:
    """Split households into a holdout set and an analysis set.

    The holdout set (first return value) is meant for fitting an outcome
    adjustment; the analysis set keeps the remaining households,
    relabelled.  The split is by household so that the analysis set is
    itself a valid two-stage experiment.
    """
    from .randomize import _as_generator

    design = data.design
    count = int(fraction * design.num_households)
    if not 0 < fraction < 1 or count == 0:
        raise StructuralError(
            f"holdout fraction {fraction} leaves no usable holdout set")
    gen = _as_generator(rng)
    perm = gen.permutation(design.num_households)
    holdout_ids = np.sort(perm[:count])
    analysis_ids = np.sort(perm[count:])
    try:
        holdout = data.subset_households(holdout_ids)
    except StructuralError as exc:
        raise EstimationError(
            f"holdout set after split is degenerate: {exc}") from exc
    try:
        analysis = data.subset_households(analysis_ids)
    except StructuralError as exc:
        raise EstimationError(
            f"analysis set after holdout split is degenerate: {exc}") from exc
    return holdout, analysis


def fit_adjustment(covariates: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    """Least-squares outcome model ``y ~ 1 + x``; returns coefficients.

    The intercept comes first.  Raises
    :class:`~twostage.errors.EstimationError` when the design matrix is
    rank deficient, naming the offending columns.
    """
    x = np.asarray(covariates, dtype=np.float64)
    y = np.asarray(outcome, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise StructuralError("covariates must be (m, K) aligned with outcome")
    design = np.column_stack([np.ones(x.shape[0]), x])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        dependent = _dependent_columns(design)
        raise EstimationError(
            "adjustment covariates are collinear (dependent columns: "
            + ", ".join(str(c - 1) for c in dependent) + ")")
    return coef


def _dependent_columns(design: np.ndarray) -> list[int]:
    basis: list[np.ndarray] = []
    dependent = []
    for j in range(design.shape[1]):
        v = design[:, j].astype(np.float64)
        scale = np.linalg.norm(v)
        for b in basis:
            v = v - (b @ v) * b
        if np.linalg.norm(v) <= 1e-10 * max(scale, 1.0):
            dependent.append(j)
        else:
            basis.append(v / np.linalg.norm(v))
    return dependent


def residualize(data: ObservedData, adjustment: np.ndarray) -> ObservedData:
    """Subtract the fitted outcome model from the outcomes.

    The adjustment is treated as fixed, so the residualized data obey
    the same design and all design-based guarantees carry over; the
    estimand is unchanged because the same adjustment value is
    subtracted from every potential outcome of an individual.
    """
    if data.covariates is None:
        raise StructuralError("data has no covariates to residualize on")
    gamma = np.asarray(adjustment, dtype=np.float64)
    if gamma.shape != (data.covariates.shape[1] + 1,):
        raise StructuralError(
            f"adjustment has {gamma.shape[0]} coefficients, expected "
            f"{data.covariates.shape[1] + 1} (intercept plus one per covariate)")
    fitted = gamma[0] + data.covariates @ gamma[1:]
    return data.with_outcome(data.outcome - fitted)


def estimate_model_assisted(data: ObservedData, scheme: WeightScheme,
                            effect: EffectKind,
                            adjustment: np.ndarray) -> EffectEstimate:
    """Unbiased estimator applied to adjustment residuals."""
    est = estimate_unbiased(residualize(data, adjustment), scheme, effect)
    return EffectEstimate(effect, scheme.label, EstimatorFamily.MODEL_ASSISTED,
                          est.point)
