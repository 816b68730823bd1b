"""Enumeration-based self checks for small designs.

Every estimator and variance formula in this package has a second,
independent route to the same number: brute-force enumeration of the
randomization distribution.  On a design small enough to enumerate,
:func:`identity_checks` draws a random potential-outcome table, walks
every possible assignment with its exact probability, and confirms that
the closed forms agree with the enumerated truth.  The ``check``
subcommand of the command line exposes this battery.

Checks that only hold for equal household sizes, or that need at least
two treated and two control households, are reported as skipped when
the design does not qualify.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimate import estimate_simple_difference, estimate_unbiased
from .model import (
    EffectKind,
    ExperimentDesign,
    PotentialOutcomeTable,
    WeightScheme,
    true_effect,
)
from .randomize import DEFAULT_MAX_ASSIGNMENTS, SeededRng, enumerate_assignments
from .regress import aggregate_regression, individual_regression, overall_regression
from .variance import (
    conservative_gap,
    naive_variance_gap,
    simple_difference_bias,
    theoretical_variance,
    variance_unbiased,
)

__all__ = ["IdentityCheck", "identity_checks", "random_table"]

TOLERANCE = 1e-9

_EFFECTS = (EffectKind.PRIMARY, EffectKind.SPILLOVER, EffectKind.OVERALL)


@dataclass(frozen=True)
class IdentityCheck:
    """Outcome of one identity check.

    ``status`` is ``"pass"``, ``"fail"``, or ``"skipped"``;
    ``deviation`` is the largest absolute discrepancy found (``None``
    when skipped) and ``detail`` says what was compared or why the
    check did not run.
    """

    name: str
    status: str
    deviation: float | None
    detail: str

    @property
    def failed(self) -> bool:
        return self.status == "fail"


def random_table(design: ExperimentDesign, rng) -> PotentialOutcomeTable:
    """Draw a potential-outcome table with household-level structure.

    Household base levels and per-household effects vary, so variance
    decompositions have nonzero between- and within-household parts and
    the conservative bound is strict.
    """
    gen = rng.generator if isinstance(rng, SeededRng) else rng
    base = gen.normal(2.0, 1.0, design.num_households)
    tau_p = gen.normal(1.5, 0.7, design.num_households)
    tau_s = gen.normal(0.7, 0.4, design.num_households)
    reps = design.household_sizes
    y00 = np.repeat(base, reps) + gen.normal(0.0, 0.6, design.num_individuals)
    y10 = np.repeat(base + tau_s, reps) + gen.normal(0.0, 0.6,
                                                     design.num_individuals)
    y11 = np.repeat(base + tau_p, reps) + gen.normal(0.0, 0.6,
                                                     design.num_individuals)
    return PotentialOutcomeTable(design, y11=y11, y10=y10, y00=y00)


def _custom_scheme(design: ExperimentDesign) -> WeightScheme:
    """A deliberately uneven but valid weighting, for exercising the
    custom-weight code path alongside the two named schemes."""
    root = np.sqrt(design.household_sizes.astype(np.float64))
    return WeightScheme.custom(root / float((design.household_sizes * root).sum()))


def _verdict(name: str, deviation: float, detail: str,
             tolerance: float = TOLERANCE) -> IdentityCheck:
    status = "pass" if deviation <= tolerance else "fail"
    return IdentityCheck(name, status, deviation, detail)


def identity_checks(design: ExperimentDesign, *, seed: int = 0,
                    max_assignments: int | None = DEFAULT_MAX_ASSIGNMENTS,
                    ) -> list[IdentityCheck]:
    """Run the full identity battery on one random table.

    Returns one :class:`IdentityCheck` per identity, in a fixed order.
    Raises :class:`~twostage.errors.CapacityError` when the design has
    more assignments than ``max_assignments``.
    """
    table = random_table(design, SeededRng(seed))
    schemes = (WeightScheme.household(), WeightScheme.individual(),
               _custom_scheme(design))
    combos = [(s, e) for s in schemes for e in _EFFECTS]
    equal_sizes = design.has_equal_sizes()
    can_split = (design.num_treated_households >= 2
                 and design.num_control_households >= 2)

    est_mean = {k: 0.0 for k in range(len(combos))}
    est_sq = dict(est_mean)
    vhat_mean = dict(est_mean)
    sd_mean = {e: 0.0 for e in _EFFECTS}
    hc2_mean = 0.0
    dev_member = 0.0
    dev_household = 0.0
    dev_overall = 0.0

    for assignment, prob in enumerate_assignments(
            design, max_assignments=max_assignments):
        data = table.observe(assignment)
        for k, (scheme, effect) in enumerate(combos):
            point = estimate_unbiased(data, scheme, effect).point
            est_mean[k] += prob * point
            est_sq[k] += prob * point * point
            if can_split:
                vhat_mean[k] += prob * variance_unbiased(data, scheme, effect)
        for effect in _EFFECTS:
            sd_mean[effect] += prob * estimate_simple_difference(
                data, effect).point
        if can_split:
            for scheme in schemes:
                agg = aggregate_regression(data, scheme)
                over = overall_regression(data, scheme)
                for effect, coef in ((EffectKind.PRIMARY, "primary"),
                                     (EffectKind.SPILLOVER, "spillover")):
                    dev_household = max(
                        dev_household,
                        abs(agg.coefficient(coef)
                            - estimate_unbiased(data, scheme, effect).point),
                        abs(agg.variance(coef)
                            - variance_unbiased(data, scheme, effect)))
                dev_overall = max(
                    dev_overall,
                    abs(over.coefficient("overall") - estimate_unbiased(
                        data, scheme, EffectKind.OVERALL).point),
                    abs(over.variance("overall") - variance_unbiased(
                        data, scheme, EffectKind.OVERALL)))
            if equal_sizes:
                hw = WeightScheme.household()
                member = individual_regression(data, vcov="cluster")
                for effect, coef in ((EffectKind.PRIMARY, "primary"),
                                     (EffectKind.SPILLOVER, "spillover")):
                    dev_member = max(
                        dev_member,
                        abs(member.coefficient(coef)
                            - estimate_unbiased(data, hw, effect).point),
                        abs(member.variance(coef)
                            - variance_unbiased(data, hw, effect)))
                hc2_mean += prob * individual_regression(
                    data, vcov="hc2").variance("primary")

    checks = []

    dev = max(abs(est_mean[k] - true_effect(table, scheme, effect))
              for k, (scheme, effect) in enumerate(combos))
    checks.append(_verdict(
        "unbiased-mean", dev,
        "estimator mean over all assignments equals the target "
        f"({len(combos)} scheme/effect pairs)"))

    dev = max(abs((est_sq[k] - est_mean[k] ** 2)
                  - theoretical_variance(table, scheme, effect))
              for k, (scheme, effect) in enumerate(combos))
    checks.append(_verdict(
        "variance-formula", dev,
        "enumerated estimator variance equals the closed form"))

    if can_split:
        gap_dev = 0.0
        worst_slack = np.inf
        for k, (scheme, effect) in enumerate(combos):
            truth = est_sq[k] - est_mean[k] ** 2
            gap = vhat_mean[k] - truth
            worst_slack = min(worst_slack, gap)
            gap_dev = max(gap_dev, abs(
                gap - conservative_gap(table, scheme, effect)))
        dev = gap_dev if worst_slack >= -TOLERANCE else np.inf
        checks.append(_verdict(
            "variance-bound", dev,
            "expected variance estimate exceeds the truth by exactly "
            "the effect-variation term"))
    else:
        checks.append(IdentityCheck(
            "variance-bound", "skipped", None,
            "needs at least two treated and two control households"))

    iw = WeightScheme.individual()
    dev = max(abs((sd_mean[e] - true_effect(table, iw, e))
                  - simple_difference_bias(table, e)) for e in _EFFECTS)
    checks.append(_verdict(
        "difference-bias", dev,
        "simple-difference bias equals the covariance closed form"))

    if can_split and equal_sizes:
        checks.append(_verdict(
            "member-regression", dev_member,
            "individual regression with household-clustered errors "
            "matches the household-level route"))
    elif not equal_sizes:
        checks.append(IdentityCheck(
            "member-regression", "skipped", None,
            "holds only for equal household sizes"))
    else:
        checks.append(IdentityCheck(
            "member-regression", "skipped", None,
            "needs at least two treated and two control households"))

    if can_split:
        checks.append(_verdict(
            "household-regression", dev_household,
            "household-level regression matches the direct estimator "
            "for every scheme"))
        checks.append(_verdict(
            "overall-regression", dev_overall,
            "two-row household regression matches the overall-effect "
            "estimator"))
    else:
        for name in ("household-regression", "overall-regression"):
            checks.append(IdentityCheck(
                name, "skipped", None,
                "needs at least two treated and two control households"))

    if can_split and equal_sizes:
        k = 0  # combos[0] is (household scheme, primary effect)
        truth = est_sq[k] - est_mean[k] ** 2
        dev = abs((hc2_mean - truth) - naive_variance_gap(table))
        checks.append(_verdict(
            "pooled-variance-gap", dev,
            "expected unclustered variance minus the truth equals the "
            "closed-form gap"))
    elif not equal_sizes:
        checks.append(IdentityCheck(
            "pooled-variance-gap", "skipped", None,
            "holds only for equal household sizes"))
    else:
        checks.append(IdentityCheck(
            "pooled-variance-gap", "skipped", None,
            "needs at least two treated and two control households"))

    return checks
