"""Point estimators: hand values, exact unbiasedness, stratification."""
import numpy as np
import pytest

from twostage.errors import EstimationError, StructuralError
from twostage.estimate import (
    estimate_hajek,
    estimate_model_assisted,
    estimate_post_stratified,
    estimate_simple_difference,
    estimate_unbiased,
    fit_adjustment,
    household_cell_stats,
    residualize,
    split_holdout,
    stratum_decomposition,
)
from twostage.model import (
    EffectKind,
    EstimatorFamily,
    ObservedData,
    PotentialOutcomeTable,
    StrataSpec,
    WeightScheme,
    true_effect,
)
from twostage.randomize import SeededRng

from conftest import (
    MIXED_DESIGNS,
    build_design,
    build_table,
    exact_mean_var,
    iter_assignments,
)

ALL_EFFECTS = list(EffectKind)


def named_schemes():
    return [WeightScheme.household(), WeightScheme.individual()]


def tiny_mixed_data(outcome):
    """Two households of sizes (2, 3); household 1 treated via member 0."""
    return ObservedData(
        household=np.array([0, 0, 1, 1, 1]),
        household_treated=np.array([False, False, True, True, True]),
        individual_treated=np.array([False, False, True, False, False]),
        outcome=np.asarray(outcome, dtype=np.float64),
    )


class TestHandValues:
    def test_household_weighting_is_mean_difference(self):
        # equal sizes, treated household 0 via member 0
        data = ObservedData(
            household=np.array([0, 0, 1, 1]),
            household_treated=np.array([True, True, False, False]),
            individual_treated=np.array([True, False, False, False]),
            outcome=np.array([5.0, 3.0, 1.0, 2.0]),
        )
        hw = WeightScheme.household()
        assert estimate_unbiased(data, hw, EffectKind.PRIMARY).point == 3.5
        assert estimate_unbiased(data, hw, EffectKind.SPILLOVER).point == 1.5
        assert estimate_unbiased(data, hw, EffectKind.OVERALL).point == 2.5

    def test_individual_weighting_mixed_sizes(self):
        data = tiny_mixed_data([1.0, 2.0, 6.0, 3.0, 3.0])
        iw = WeightScheme.individual()
        # transform factor is N * n_i / n_plus = (0.8, 1.2) per household
        assert estimate_unbiased(data, iw, EffectKind.PRIMARY).point == \
            pytest.approx(7.2 - 1.2)
        assert estimate_unbiased(data, iw, EffectKind.SPILLOVER).point == \
            pytest.approx(1.2 * 3.0 - 1.2)

    def test_simple_difference_pools_individuals(self):
        data = tiny_mixed_data([1.0, 2.0, 6.0, 3.0, 3.0])
        assert estimate_simple_difference(data, EffectKind.PRIMARY).point == \
            pytest.approx(6.0 - 1.5)
        assert estimate_simple_difference(data, EffectKind.SPILLOVER).point == \
            pytest.approx(3.0 - 1.5)
        assert estimate_simple_difference(data, EffectKind.OVERALL).point == \
            pytest.approx(4.0 - 1.5)

    def test_metadata(self):
        data = tiny_mixed_data([1.0, 2.0, 6.0, 3.0, 3.0])
        est = estimate_unbiased(data, WeightScheme.household(),
                                EffectKind.SPILLOVER)
        assert est.family is EstimatorFamily.UNBIASED
        assert est.scheme == "hw"
        assert est.effect is EffectKind.SPILLOVER
        assert est.variance is None
        sd = estimate_simple_difference(data, EffectKind.PRIMARY)
        assert sd.family is EstimatorFamily.SIMPLE_DIFFERENCE
        assert sd.scheme == "iw"


class TestCellStats:
    def test_alignment_and_means(self, mixed_data):
        stats = household_cell_stats(mixed_data, None)
        assert stats.treated.tolist() == [0, 2]
        assert stats.control.tolist() == [1, 3]
        y = mixed_data.outcome
        assert stats.direct.tolist() == [y[1], y[5]]
        assert stats.spill_mean[0] == pytest.approx(y[0])
        assert stats.spill_mean[1] == pytest.approx(y[6])
        np.testing.assert_allclose(stats.control_mean,
                                   [y[2:5].mean(), y[7:11].mean()])
        np.testing.assert_array_equal(stats.factor_treated, [1.0, 1.0])

    def test_transform_applied(self, mixed_data):
        iw = WeightScheme.individual()
        stats = household_cell_stats(mixed_data, iw)
        design = mixed_data.design
        factor = design.num_households * design.household_sizes / 11.0
        np.testing.assert_allclose(stats.factor_treated, factor[[0, 2]])
        assert stats.direct[0] == pytest.approx(
            factor[0] * mixed_data.outcome[1])


class TestExactUnbiasedness:
    """Expectation over every assignment equals the estimand."""

    @pytest.mark.parametrize("spec", MIXED_DESIGNS[:2])
    def test_unbiased_estimator(self, spec):
        design = build_design(spec)
        table = build_table(design, seed=31)
        schemes = named_schemes()
        for scheme in schemes:
            for effect in ALL_EFFECTS:
                pairs = [
                    (estimate_unbiased(table.observe(a), scheme, effect).point, p)
                    for a, p in iter_assignments(design)
                ]
                mean, _ = exact_mean_var(pairs)
                assert mean == pytest.approx(
                    true_effect(table, scheme, effect), rel=1e-12, abs=1e-12)

    def test_simple_difference_is_biased_with_mixed_sizes(self):
        design = build_design(MIXED_DESIGNS[0])
        table = build_table(design, seed=31)
        pairs = [
            (estimate_simple_difference(table.observe(a),
                                        EffectKind.PRIMARY).point, p)
            for a, p in iter_assignments(design)
        ]
        mean, _ = exact_mean_var(pairs)
        target = true_effect(table, WeightScheme.individual(),
                             EffectKind.PRIMARY)
        assert abs(mean - target) > 1e-3

    def test_simple_difference_is_unbiased_with_equal_sizes(self):
        design = build_design((4, 2, (3, 3, 3, 3)))
        table = build_table(design, seed=31)
        pairs = [
            (estimate_simple_difference(table.observe(a),
                                        EffectKind.SPILLOVER).point, p)
            for a, p in iter_assignments(design)
        ]
        mean, _ = exact_mean_var(pairs)
        target = true_effect(table, WeightScheme.individual(),
                             EffectKind.SPILLOVER)
        assert mean == pytest.approx(target, rel=1e-12)


class TestHajek:
    def test_equals_unbiased_for_household_weights(self, mixed_data):
        hw = WeightScheme.household()
        for effect in ALL_EFFECTS:
            assert estimate_hajek(mixed_data, hw, effect).point == \
                pytest.approx(estimate_unbiased(mixed_data, hw, effect).point,
                              rel=1e-14)

    def test_equals_unbiased_with_equal_sizes(self, equal_data):
        for scheme in named_schemes():
            for effect in ALL_EFFECTS:
                assert estimate_hajek(equal_data, scheme, effect).point == \
                    pytest.approx(
                        estimate_unbiased(equal_data, scheme, effect).point,
                        rel=1e-14)

    def test_shift_invariance(self, mixed_data):
        iw = WeightScheme.individual()
        shifted = mixed_data.with_outcome(mixed_data.outcome + 100.0)
        base = estimate_hajek(mixed_data, iw, EffectKind.PRIMARY).point
        assert estimate_hajek(shifted, iw, EffectKind.PRIMARY).point == \
            pytest.approx(base, abs=1e-9)
        # the unweighted-denominator estimator is not shift invariant here
        raw = estimate_unbiased(mixed_data, iw, EffectKind.PRIMARY).point
        raw_shifted = estimate_unbiased(shifted, iw, EffectKind.PRIMARY).point
        assert abs(raw_shifted - raw) > 1.0

    def test_family_label(self, mixed_data):
        est = estimate_hajek(mixed_data, WeightScheme.individual(),
                             EffectKind.OVERALL)
        assert est.family is EstimatorFamily.HAJEK


class TestPostStratified:
    def test_single_stratum_equals_unbiased(self, mixed_data):
        strata = StrataSpec(np.zeros(4, dtype=np.int64))
        for scheme in named_schemes():
            for effect in ALL_EFFECTS:
                assert estimate_post_stratified(
                    mixed_data, scheme, effect, strata).point == pytest.approx(
                        estimate_unbiased(mixed_data, scheme, effect).point,
                        rel=1e-12)

    def test_recombination_identity(self):
        design = build_design((4, 2, (2, 2, 3, 3)))
        table = build_table(design, seed=17)
        a = next(iter(
            a for a, _ in iter_assignments(design)
            if a.household_treated.tolist() == [True, False, True, False]))
        data = table.observe(a)
        strata = StrataSpec.by_size(design, "2,3")
        iw = WeightScheme.individual()
        parts = stratum_decomposition(data, iw, strata)
        assert sum(w for _, w, _, _ in parts) == pytest.approx(1.0)
        manual = sum(
            w * estimate_unbiased(sub, sub_scheme, EffectKind.PRIMARY).point
            for _, w, sub, sub_scheme in parts)
        est = estimate_post_stratified(data, iw, EffectKind.PRIMARY, strata)
        assert est.point == pytest.approx(manual, rel=1e-14)
        assert est.family is EstimatorFamily.POST_STRATIFIED

    def test_conditionally_unbiased(self):
        # condition on one treated household per stratum, under which the
        # post-stratified estimator has expectation equal to the estimand
        design = build_design((4, 2, (2, 2, 3, 3)))
        table = build_table(design, seed=23)
        strata = StrataSpec.by_size(design, "2,3")
        for scheme in named_schemes():
            for effect in ALL_EFFECTS:
                num = 0.0
                den = 0.0
                for a, p in iter_assignments(design):
                    if int(a.household_treated[:2].sum()) != 1:
                        continue
                    data = table.observe(a)
                    num += p * estimate_post_stratified(
                        data, scheme, effect, strata).point
                    den += p
                assert num / den == pytest.approx(
                    true_effect(table, scheme, effect), rel=1e-12)

    def test_empty_stratum_raises(self):
        design = build_design((4, 2, (2, 2, 3, 3)))
        table = build_table(design, seed=17)
        a = next(iter(
            a for a, _ in iter_assignments(design)
            if a.household_treated.tolist() == [True, True, False, False]))
        data = table.observe(a)
        strata = StrataSpec.by_size(design, "2,3")
        with pytest.raises(EstimationError, match="stratum 'size 2'"):
            estimate_post_stratified(data, WeightScheme.household(),
                                     EffectKind.PRIMARY, strata)

    def test_strata_must_cover_design(self, mixed_data):
        with pytest.raises(StructuralError, match="label every household"):
            stratum_decomposition(mixed_data, WeightScheme.household(),
                                  StrataSpec(np.array([0, 0, 1])))


class TestHoldout:
    def test_partition(self, mixed_data):
        # find a seed whose two-household holdout mixes treated and control
        for seed in range(20):
            try:
                holdout, analysis = split_holdout(mixed_data, 0.5,
                                                  SeededRng(seed))
                break
            except EstimationError:
                continue
        else:  # pragma: no cover
            pytest.fail("no valid split found")
        assert holdout.design.num_households == 2
        assert analysis.design.num_households == 2
        total = holdout.outcome.shape[0] + analysis.outcome.shape[0]
        assert total == mixed_data.outcome.shape[0]
        merged = np.sort(np.concatenate([holdout.outcome, analysis.outcome]))
        np.testing.assert_array_equal(merged, np.sort(mixed_data.outcome))

    def test_bad_fractions(self, mixed_data):
        for fraction in (0.0, 1.0, 0.05, -0.2):
            with pytest.raises(StructuralError, match="holdout fraction"):
                split_holdout(mixed_data, fraction, SeededRng(0))

    def test_degenerate_splits_raise(self):
        # treated pattern T,T,F,F,F with a 3-household holdout: depending
        # on the draw the holdout or the remaining analysis set can end up
        # with only one treatment status, which must be reported
        design = build_design((5, 2, (2, 2, 2, 2, 2)))
        table = build_table(design, seed=3)
        a = next(iter(
            a for a, _ in iter_assignments(design)
            if a.household_treated.tolist() == [True, True, False, False,
                                                False]))
        data = table.observe(a)
        outcomes = {"ok": 0, "holdout": 0, "analysis": 0}
        for seed in range(40):
            try:
                holdout, analysis = split_holdout(data, 0.6, SeededRng(seed))
            except EstimationError as exc:
                text = str(exc)
                assert "degenerate" in text
                outcomes["holdout" if text.startswith("holdout") else
                         "analysis"] += 1
            else:
                assert analysis.design.num_households == 2
                outcomes["ok"] += 1
        assert min(outcomes.values()) > 0


class TestAdjustment:
    def test_fit_recovers_exact_linear_model(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(30, 2))
        y = 2.0 + 3.0 * x[:, 0] - 1.0 * x[:, 1]
        coef = fit_adjustment(x, y)
        np.testing.assert_allclose(coef, [2.0, 3.0, -1.0], atol=1e-10)

    def test_collinear_covariates_named(self):
        rng = np.random.default_rng(8)
        x1 = rng.normal(size=20)
        x = np.column_stack([x1, 2.0 * x1])
        with pytest.raises(EstimationError, match="collinear"):
            fit_adjustment(x, rng.normal(size=20))

    def test_shape_validation(self):
        with pytest.raises(StructuralError, match="aligned"):
            fit_adjustment(np.zeros((4, 1)), np.zeros(5))

    def test_residualize(self, mixed_data):
        n = mixed_data.outcome.shape[0]
        cov = np.arange(n, dtype=np.float64).reshape(n, 1)
        data = ObservedData(mixed_data.household, mixed_data.household_treated,
                            mixed_data.individual_treated, mixed_data.outcome,
                            covariates=cov)
        adjusted = residualize(data, np.array([0.5, 0.25]))
        np.testing.assert_allclose(
            adjusted.outcome, mixed_data.outcome - 0.5 - 0.25 * cov[:, 0])
        with pytest.raises(StructuralError, match="coefficients"):
            residualize(data, np.array([0.5, 0.25, 1.0]))
        with pytest.raises(StructuralError, match="no covariates"):
            residualize(mixed_data, np.array([0.5, 0.25]))

    def test_model_assisted_point_and_unbiasedness(self):
        design = build_design(MIXED_DESIGNS[1])
        rng = np.random.default_rng(44)
        n = design.num_individuals
        cov = rng.normal(size=(n, 1))
        # outcomes strongly driven by the covariate
        base = 3.0 * cov[:, 0]
        table = PotentialOutcomeTable(
            design,
            y11=base + 2.0 + 0.1 * rng.normal(size=n),
            y10=base + 0.7 + 0.1 * rng.normal(size=n),
            y00=base + 0.1 * rng.normal(size=n),
        )
        gamma = np.array([0.0, 3.0])  # fixed adjustment, fitted elsewhere
        iw = WeightScheme.individual()

        plain = []
        assisted = []
        for a, p in iter_assignments(design):
            raw = table.observe(a)
            data = ObservedData(raw.household, raw.household_treated,
                                raw.individual_treated, raw.outcome,
                                covariates=cov)
            est = estimate_model_assisted(data, iw, EffectKind.PRIMARY, gamma)
            assert est.family is EstimatorFamily.MODEL_ASSISTED
            assert est.point == pytest.approx(
                estimate_unbiased(residualize(data, gamma), iw,
                                  EffectKind.PRIMARY).point, rel=1e-14)
            assisted.append((est.point, p))
            plain.append(
                (estimate_unbiased(data, iw, EffectKind.PRIMARY).point, p))

        target = true_effect(table, iw, EffectKind.PRIMARY)
        mean_a, var_a = exact_mean_var(assisted)
        mean_p, var_p = exact_mean_var(plain)
        assert mean_a == pytest.approx(target, rel=1e-12)
        assert mean_p == pytest.approx(target, rel=1e-12)
        # removing covariate signal shrinks the randomization variance
        assert var_a < 0.5 * var_p
