"""Variance estimation, exact design variances, and bias formulas.

The workhorse variance estimator mirrors a two-sample comparison of
household-level cell means: the sample variance of the treated-cell
means over treated households, scaled by ``1/N1``, plus the sample
variance of control-household means scaled by ``1/N0``.  It is
conservative: its expectation exceeds the true design variance by
exactly ``1/N`` times the between-household variance of the unit-level
effects, a term that vanishes only when the (transformed) household
effects are constant.

Exact design variances and the bias of the simple-difference estimator
are available for full potential-outcome tables, which is what the
enumeration-based tests in this package check the estimators against.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import log, sqrt

import numpy as np

from .errors import EstimationError, StructuralError
from .estimate import (
    HouseholdCellStats,
    _treated_cell,
    household_cell_stats,
    residualize,
    stratum_decomposition,
)
from .model import (
    EffectKind,
    ObservedData,
    PotentialOutcomeTable,
    StrataSpec,
    WeightScheme,
    transform_factor,
)

__all__ = [
    "normal_quantile",
    "confidence_interval",
    "variance_unbiased",
    "variance_hajek",
    "variance_post_stratified",
    "variance_model_assisted",
    "VarianceComponents",
    "variance_components",
    "theoretical_variance",
    "conservative_gap",
    "simple_difference_bias",
    "naive_variance_gap",
    "naive_variance_threshold",
]


def _sample_variances(stats: HouseholdCellStats, cell: np.ndarray) -> tuple[float, float]:
    if cell.shape[0] < 2 or stats.control_mean.shape[0] < 2:
        raise EstimationError(
            "variance estimation needs at least two treated and two "
            "control households")
    return (float(np.var(cell, ddof=1)), float(np.var(stats.control_mean, ddof=1)))


def variance_unbiased(data: ObservedData, scheme: WeightScheme,
                      effect: EffectKind) -> float:
    """Conservative variance estimate for the unbiased estimator.

    ``s2_cell / N1 + s2_control / N0`` with household cell means as the
    observations; for the primary effect the "cell mean" of a treated
    household is the single transformed outcome of its directly treated
    member, whose randomness across the household is thereby absorbed
    into the between-household spread.
    """
    stats = household_cell_stats(data, scheme)
    s2_cell, s2_control = _sample_variances(stats, _treated_cell(stats, effect))
    n1 = stats.treated.shape[0]
    n0 = stats.control.shape[0]
    return s2_cell / n1 + s2_control / n0


def variance_hajek(data: ObservedData, scheme: WeightScheme,
                   effect: EffectKind) -> float:
    """Linearization variance for the ratio-normalized estimator.

    Outcomes are recentered at the estimated cell means before applying
    the same household-level variance formula; with equal household
    sizes this coincides with :func:`variance_unbiased`.
    """
    stats = household_cell_stats(data, scheme)
    cell = _treated_cell(stats, effect)
    r_cell = cell.sum() / stats.factor_treated.sum()
    r_control = stats.control_mean.sum() / stats.factor_control.sum()
    centered_cell = cell - stats.factor_treated * r_cell
    centered_control = stats.control_mean - stats.factor_control * r_control
    if cell.shape[0] < 2 or stats.control_mean.shape[0] < 2:
        raise EstimationError(
            "variance estimation needs at least two treated and two "
            "control households")
    n1 = stats.treated.shape[0]
    n0 = stats.control.shape[0]
    return (float(np.var(centered_cell, ddof=1)) / n1
            + float(np.var(centered_control, ddof=1)) / n0)


def variance_post_stratified(data: ObservedData, scheme: WeightScheme,
                             effect: EffectKind, strata: StrataSpec) -> float:
    """Variance of the post-stratified estimator, ``sum_k W_k^2 V_k``.

    Stratum estimates are independent given the per-stratum treated
    counts, so their variances add after scaling by the squared stratum
    weights.
    """
    total = 0.0
    for code, weight, sub, sub_scheme in stratum_decomposition(data, scheme, strata):
        try:
            total += weight * weight * variance_unbiased(sub, sub_scheme, effect)
        except EstimationError as exc:
            raise EstimationError(
                f"stratum {strata.names[code]!r}: {exc}") from exc
    return total


def variance_model_assisted(data: ObservedData, scheme: WeightScheme,
                            effect: EffectKind, adjustment: np.ndarray) -> float:
    """Conservative variance of the residualized unbiased estimator."""
    return variance_unbiased(residualize(data, adjustment), scheme, effect)


# ---------------------------------------------------------------------------
# exact design variances for a full potential-outcome table


@dataclass(frozen=True)
class VarianceComponents:
    """Building blocks of the exact design variances.

    All quantities refer to transformed outcomes.  ``sigma2_*`` are
    averages over households of the within-household contribution of the
    second randomization stage (zero for control households, whose cell
    mean involves every member); ``v_*`` are between-household sample
    variances (``N - 1`` denominator) of the household cell means;
    ``v_primary`` / ``v_spillover`` / ``v_overall`` are the sample
    variances of the corresponding household-level unit effects, the
    terms by which the variance estimator overshoots; ``rho_00`` is the
    within-household correlation of the control outcomes,
    ``v_00 / (sigma2_00 + v_00)``.
    """

    sigma2_11: float
    sigma2_10: float
    sigma2_00: float
    sigma2_overall: float
    v_11: float
    v_10: float
    v_00: float
    v_overall_cell: float
    v_primary: float
    v_spillover: float
    v_overall: float
    rho_00: float


def _household_moments(y: np.ndarray, table: PotentialOutcomeTable):
    design = table.design
    offsets = design.household_offsets
    sizes = design.household_sizes.astype(np.float64)
    means = np.add.reduceat(y, offsets[:-1]) / sizes
    sq = np.add.reduceat(y * y, offsets[:-1])
    disp = sq / sizes - means * means  # within-household variance, 1/n_i form
    return means, np.maximum(disp, 0.0)


def variance_components(table: PotentialOutcomeTable,
                        scheme: WeightScheme) -> VarianceComponents:
    design = table.design
    factor = transform_factor(design, scheme)
    sizes = design.household_sizes.astype(np.float64)
    m11, d11 = _household_moments(factor * table.y11, table)
    m10, d10 = _household_moments(factor * table.y10, table)
    m00, d00 = _household_moments(factor * table.y00, table)
    diff = factor * (table.y11 - table.y10)
    _, d_direct = _household_moments(diff, table)
    mu_overall = m11 / sizes + (sizes - 1.0) / sizes * m10
    v_00 = float(np.var(m00, ddof=1))
    sigma2_00 = float(d00.mean())
    denom = sigma2_00 + v_00
    return VarianceComponents(
        sigma2_11=float(d11.mean()),
        sigma2_10=float((d10 / (sizes - 1.0) ** 2).mean()),
        sigma2_00=sigma2_00,
        sigma2_overall=float((d_direct / sizes ** 2).mean()),
        v_11=float(np.var(m11, ddof=1)),
        v_10=float(np.var(m10, ddof=1)),
        v_00=v_00,
        v_overall_cell=float(np.var(mu_overall, ddof=1)),
        v_primary=float(np.var(m11 - m00, ddof=1)),
        v_spillover=float(np.var(m10 - m00, ddof=1)),
        v_overall=float(np.var(mu_overall - m00, ddof=1)),
        rho_00=(v_00 / denom) if denom > 0 else 0.0,
    )


def theoretical_variance(table: PotentialOutcomeTable, scheme: WeightScheme,
                         effect: EffectKind) -> float:
    """Exact design variance of the unbiased estimator.

    ``(within + between_cell) / N1 + between_control / N0 -
    between_effect / N``, where the first term carries the second-stage
    dispersion of the treated-household cell statistic and the last term
    is the usual unidentified effect-heterogeneity discount.
    """
    c = variance_components(table, scheme)
    design = table.design
    n1, n0, n = (design.num_treated_households, design.num_control_households,
                 design.num_households)
    if effect is EffectKind.PRIMARY:
        return (c.sigma2_11 + c.v_11) / n1 + c.v_00 / n0 - c.v_primary / n
    if effect is EffectKind.SPILLOVER:
        return (c.sigma2_10 + c.v_10) / n1 + c.v_00 / n0 - c.v_spillover / n
    if effect is EffectKind.OVERALL:
        return ((c.sigma2_overall + c.v_overall_cell) / n1 + c.v_00 / n0
                - c.v_overall / n)
    raise StructuralError(f"unknown effect {effect!r}")


def conservative_gap(table: PotentialOutcomeTable, scheme: WeightScheme,
                     effect: EffectKind) -> float:
    """Expected overshoot of :func:`variance_unbiased`.

    The expectation of the variance estimator minus the true design
    variance; equals the between-household sample variance of the
    relevant unit effects divided by ``N``, and is zero exactly when the
    transformed household effects are constant.
    """
    c = variance_components(table, scheme)
    gap = {
        EffectKind.PRIMARY: c.v_primary,
        EffectKind.SPILLOVER: c.v_spillover,
        EffectKind.OVERALL: c.v_overall,
    }[effect]
    return gap / table.design.num_households


# ---------------------------------------------------------------------------
# bias of the simple-difference estimator


def simple_difference_bias(table: PotentialOutcomeTable, effect: EffectKind,
                           *, max_assignments: int | None = None) -> float:
    """Exact bias of the simple-difference estimator for the
    individual-weighted estimand.

    Two sources contribute: a size-weighting mismatch in the treated
    cells (individuals in small households are overrepresented among the
    directly treated) and ratio terms from the random number of
    individuals in each pooled cell.  The ratio terms are covariances
    across the first randomization stage and are evaluated by exact
    enumeration of treated sets, so this is limited to designs small
    enough to enumerate; with equal household sizes every term vanishes
    and the bias is identically zero.
    """
    from .randomize import DEFAULT_MAX_ASSIGNMENTS, enumerate_household_assignments

    if max_assignments is None:
        max_assignments = DEFAULT_MAX_ASSIGNMENTS
    design = table.design
    if design.has_equal_sizes():
        return 0.0
    sizes = design.household_sizes.astype(np.float64)
    nbar = design.mean_household_size
    n1, n0 = design.num_treated_households, design.num_control_households
    big_n = design.num_households
    offsets = design.household_offsets
    s11 = np.add.reduceat(table.y11, offsets[:-1])
    s10 = np.add.reduceat(table.y10, offsets[:-1])
    s00 = np.add.reduceat(table.y00, offsets[:-1])

    def ratio_mean(values: np.ndarray, counts: np.ndarray, over_treated: bool) -> tuple[float, float]:
        """E[ratio] and E[numerator] over first-stage enumeration."""
        total_ratio = 0.0
        e_num = 0.0
        for treated, prob in enumerate_household_assignments(
                design, max_assignments=max_assignments):
            mask = np.zeros(big_n, dtype=bool)
            mask[treated] = True
            sel = mask if over_treated else ~mask
            num = float(values[sel].sum())
            den = float(counts[sel].sum())
            total_ratio += prob * (num / den)
            e_num += prob * num
        return total_ratio, e_num

    # control side, common to every effect: Cov(R00, B00) / (N0 * nbar)
    r00, e_a00 = ratio_mean(s00, sizes, over_treated=False)
    cov00 = e_a00 - r00 * (n0 * nbar)
    control_term = cov00 / (n0 * nbar)

    if effect is EffectKind.PRIMARY:
        per = nbar / sizes - 1.0
        size_term = float((per * s11).sum() / (big_n * nbar))
        return size_term + control_term
    if effect is EffectKind.SPILLOVER:
        per = nbar * (sizes - 1.0) / ((nbar - 1.0) * sizes) - 1.0
        size_term = float((per * s10).sum() / (big_n * nbar))
        vals = (sizes - 1.0) / sizes * s10
        r10, e_a10 = ratio_mean(vals, sizes - 1.0, over_treated=True)
        cov10 = e_a10 - r10 * (n1 * (nbar - 1.0))
        return size_term + control_term - cov10 / (n1 * (nbar - 1.0))
    if effect is EffectKind.OVERALL:
        g = s11 / sizes + (sizes - 1.0) / sizes * s10
        r_ov, e_g = ratio_mean(g, sizes, over_treated=True)
        cov_ov = e_g - r_ov * (n1 * nbar)
        return control_term - cov_ov / (n1 * nbar)
    raise StructuralError(f"unknown effect {effect!r}")


# ---------------------------------------------------------------------------
# expected error of the unclustered heteroskedasticity-robust variance


def _raw_components(table: PotentialOutcomeTable) -> VarianceComponents:
    if not table.design.has_equal_sizes():
        raise StructuralError(
            "closed form requires equal household sizes")
    return variance_components(table, WeightScheme.household())


def naive_variance_gap(table: PotentialOutcomeTable) -> float:
    """Expected error of the unclustered robust variance, primary effect.

    For equal household sizes, individual-level regression on cell
    dummies with an HC2-style heteroskedasticity correction but *no*
    clustering has expectation ``Var + gap`` with

    ``gap = (sigma2_00 + v_00) * (1 - n * rho_00) / (n * N0 - 1)
            + v_primary / N``.

    The control cell looks like ``n * N0`` independent observations to
    the unclustered formula; with within-household correlation
    ``rho_00 > 1/n`` that understates the truth faster than the
    effect-heterogeneity term can compensate, and the gap turns
    negative (anti-conservative inference).
    """
    c = _raw_components(table)
    design = table.design
    n = int(design.household_sizes[0])
    n0 = design.num_control_households
    base = (c.sigma2_00 + c.v_00) * (1.0 - n * c.rho_00) / (n * n0 - 1)
    return base + c.v_primary / design.num_households


def naive_variance_threshold(table: PotentialOutcomeTable) -> float:
    """Control-cell correlation above which the naive variance is
    anti-conservative in expectation (primary effect, equal sizes)."""
    c = _raw_components(table)
    design = table.design
    n = int(design.household_sizes[0])
    n0 = design.num_control_households
    total = c.sigma2_00 + c.v_00
    if total <= 0:
        raise EstimationError("control outcomes are constant; no threshold")
    return 1.0 / n + (n * n0 - 1) / (n * design.num_households) * (
        c.v_primary / total)


# ---------------------------------------------------------------------------
# normal quantiles and intervals

_A = (3.3871328727963666080, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
      3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (2.05319162663775882187, 1.67638483018380384940, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2,
      5.47593808499534494600e-4, 1.05075007164441684324e-9)
_E = (6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
      2.96560571828504891230e-1, 2.65321895265761230930e-2,
      1.24266094738807843860e-3, 2.71155556874348757815e-5,
      2.01033439929228813265e-7)
_F = (5.99832206555887937690e-1, 1.36929880922735805310e-1,
      1.48753612908506148525e-2, 7.86869131145613259500e-4,
      1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _ratio(r: float, num: tuple, den: tuple) -> float:
    p = num[-1]
    for coef in num[-2::-1]:
        p = p * r + coef
    q = den[-1]
    for coef in den[-2::-1]:
        q = q * r + coef
    q = q * r + 1.0
    return p / q


def normal_quantile(p: float) -> float:
    """Quantile of the standard normal distribution.

    Rational minimax approximation accurate to full double precision on
    the open unit interval.
    """
    if not 0.0 < p < 1.0:
        raise StructuralError(f"quantile level must be in (0, 1), got {p}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _ratio(r, _A, _B)
    r = p if q < 0 else 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        value = _ratio(r - 1.6, _C, _D)
    else:
        value = _ratio(r - 5.0, _E, _F)
    return -value if q < 0 else value


def confidence_interval(point: float, variance: float,
                        level: float) -> tuple[float, float]:
    """Symmetric normal-approximation interval."""
    if variance < 0:
        raise EstimationError(f"negative variance estimate {variance}")
    if not 0.0 < level < 1.0:
        raise StructuralError(f"confidence level must be in (0, 1), got {level}")
    half = normal_quantile(0.5 + level / 2.0) * sqrt(variance)
    return point - half, point + half
