"""Data model: designs, assignments, observation, weights, strata."""
import numpy as np
import pytest

from twostage.errors import StructuralError
from twostage.model import (
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

from conftest import build_design, build_table, MIXED_DESIGNS


class TestExperimentDesign:
    def test_basic_layout(self):
        design = build_design((4, 2, (2, 3, 2, 4)))
        assert design.num_individuals == 11
        assert design.num_control_households == 2
        assert design.mean_household_size == pytest.approx(2.75)
        assert design.household_offsets.tolist() == [0, 2, 5, 7, 11]
        assert design.member_household.tolist() == [0, 0, 1, 1, 1, 2, 2,
                                                    3, 3, 3, 3]
        assert design.members(1) == slice(2, 5)
        assert not design.has_equal_sizes()

    def test_equal_sizes_builder(self):
        design = ExperimentDesign.equal_sizes(3, 1, 4)
        assert design.household_sizes.tolist() == [4, 4, 4]
        assert design.has_equal_sizes()

    def test_sizes_are_frozen(self):
        design = build_design((4, 2, (2, 3, 2, 4)))
        with pytest.raises(ValueError):
            design.household_sizes[0] = 5

    def test_validation(self):
        with pytest.raises(StructuralError, match="length"):
            ExperimentDesign(3, 1, np.array([2, 2]))
        with pytest.raises(StructuralError, match="two households"):
            ExperimentDesign(1, 1, np.array([2]))
        with pytest.raises(StructuralError, match="at least one treated"):
            ExperimentDesign(3, 3, np.array([2, 2, 2]))
        with pytest.raises(StructuralError, match="at least one treated"):
            ExperimentDesign(3, 0, np.array([2, 2, 2]))
        with pytest.raises(StructuralError, match="household 1 has size 1"):
            ExperimentDesign(3, 1, np.array([2, 1, 2]))
        with pytest.raises(StructuralError, match="integers"):
            ExperimentDesign(2, 1, np.array([2.5, 2.0]))
        # whole floats are accepted
        design = ExperimentDesign(2, 1, np.array([2.0, 3.0]))
        assert design.household_sizes.dtype == np.int64


class TestAssignment:
    def test_validate_and_indicators(self):
        design = build_design((4, 2, (2, 3, 2, 4)))
        a = Assignment(np.array([True, False, False, True]),
                       np.array([1, -1, -1, 3], dtype=np.int64))
        a.validate(design)
        assert a.treated_households.tolist() == [0, 3]
        assert a.control_households.tolist() == [1, 2]
        h, z = a.individual_indicators(design)
        assert h.tolist() == [True, True, False, False, False, False, False,
                              True, True, True, True]
        assert z.tolist() == [False, True, False, False, False, False, False,
                              False, False, False, True]

    def test_validate_errors(self):
        design = build_design((4, 2, (2, 3, 2, 4)))
        with pytest.raises(StructuralError, match="treats 1 households"):
            Assignment(np.array([True, False, False, False]),
                       np.array([0, -1, -1, -1])).validate(design)
        with pytest.raises(StructuralError, match="-1"):
            Assignment(np.array([True, False, False, True]),
                       np.array([0, 0, -1, 0])).validate(design)
        with pytest.raises(StructuralError, match="out of range"):
            Assignment(np.array([True, False, False, True]),
                       np.array([2, -1, -1, 0])).validate(design)
        with pytest.raises(StructuralError, match="one entry per household"):
            Assignment(np.array([True, False]),
                       np.array([0, -1])).validate(design)


class TestPotentialOutcomeTable:
    def test_household_means(self):
        design = build_design((2, 1, (2, 3)))
        table = PotentialOutcomeTable(
            design,
            y11=np.array([1.0, 3.0, 0.0, 0.0, 6.0]),
            y10=np.zeros(5),
            y00=np.array([1.0, 1.0, 2.0, 2.0, 2.0]),
        )
        assert table.household_means("11").tolist() == [2.0, 2.0]
        assert table.household_means("00").tolist() == [1.0, 2.0]

    def test_observe_matches_manual_rule(self):
        design = build_design(MIXED_DESIGNS[2])
        table = build_table(design, seed=7)
        a = Assignment(np.array([False, True, True, False, False]),
                       np.array([-1, 0, 2, -1, -1], dtype=np.int64))
        data = table.observe(a)
        for i in range(design.num_households):
            for j in range(int(design.household_sizes[i])):
                flat = int(design.household_offsets[i]) + j
                if not a.household_treated[i]:
                    expected = table.y00[flat]
                elif j == a.treated_member[i]:
                    expected = table.y11[flat]
                else:
                    expected = table.y10[flat]
                assert data.outcome[flat] == expected

    def test_validation(self):
        design = build_design((2, 1, (2, 2)))
        with pytest.raises(StructuralError, match="shape"):
            PotentialOutcomeTable(design, y11=np.zeros(3), y10=np.zeros(4),
                                  y00=np.zeros(4))
        with pytest.raises(StructuralError, match="non-finite"):
            PotentialOutcomeTable(design, y11=np.array([1.0, np.nan, 0, 0]),
                                  y10=np.zeros(4), y00=np.zeros(4))


class TestObservedData:
    def test_design_and_assignment_round_trip(self, mixed_data):
        design = mixed_data.design
        assert design.household_sizes.tolist() == [2, 3, 2, 4]
        assert design.num_treated_households == 2
        a = mixed_data.assignment
        assert a.household_treated.tolist() == [True, False, True, False]
        assert a.treated_member.tolist() == [1, -1, 0, -1]

    def test_structure_errors(self):
        def make(household, h, z):
            outcome = np.arange(len(household), dtype=np.float64)
            return ObservedData(np.array(household), np.array(h),
                                np.array(z), outcome)

        with pytest.raises(StructuralError, match="sorted"):
            make([0, 1, 0, 1], [True] * 4, [True, False, False, False])
        with pytest.raises(StructuralError, match="contiguous"):
            make([0, 0, 2, 2], [True, True, False, False],
                 [True, False, False, False])
        with pytest.raises(StructuralError, match="at least two"):
            make([0, 1, 1], [True, False, False], [True, False, False])
        with pytest.raises(StructuralError, match="constant within"):
            make([0, 0, 1, 1], [True, False, False, False],
                 [True, False, False, False])
        with pytest.raises(StructuralError, match="exactly one"):
            make([0, 0, 1, 1], [True, True, False, False],
                 [True, True, False, False])
        with pytest.raises(StructuralError, match="control household 1"):
            make([0, 0, 1, 1], [True, True, False, False],
                 [True, False, True, False])
        with pytest.raises(StructuralError, match="one treated and one control"):
            make([0, 0, 1, 1], [True, True, True, True],
                 [True, False, True, False])

    def test_subset_households(self, mixed_data):
        sub = mixed_data.subset_households(np.array([1, 2]))
        assert sub.household.tolist() == [0, 0, 0, 1, 1]
        assert sub.design.household_sizes.tolist() == [3, 2]
        assert sub.design.num_treated_households == 1
        np.testing.assert_array_equal(sub.outcome, mixed_data.outcome[2:7])

    def test_with_outcome(self, mixed_data):
        new = mixed_data.with_outcome(np.zeros_like(mixed_data.outcome))
        assert new.outcome.sum() == 0.0
        assert new.household is mixed_data.household

    def test_covariate_validation(self, mixed_data):
        n = mixed_data.outcome.shape[0]
        with pytest.raises(StructuralError, match="shape"):
            ObservedData(mixed_data.household, mixed_data.household_treated,
                         mixed_data.individual_treated, mixed_data.outcome,
                         covariates=np.zeros(n))
        with pytest.raises(StructuralError, match="covariate_names"):
            ObservedData(mixed_data.household, mixed_data.household_treated,
                         mixed_data.individual_treated, mixed_data.outcome,
                         covariate_names=("x",))


class TestWeightScheme:
    def test_named_schemes(self):
        design = build_design((4, 2, (2, 3, 2, 4)))
        hw = WeightScheme.household().resolve(design)
        np.testing.assert_allclose(hw, [1 / 8, 1 / 12, 1 / 8, 1 / 16])
        iw = WeightScheme.individual().resolve(design)
        np.testing.assert_allclose(iw, [1 / 11] * 4)
        for scheme in (WeightScheme.household(), WeightScheme.individual()):
            w = scheme.resolve(design)
            assert w @ design.household_sizes == pytest.approx(1.0)
        assert WeightScheme.household().label == "hw"
        assert WeightScheme.individual().label == "iw"
        assert WeightScheme.custom(np.full(2, 0.25)).label == "custom"

    def test_custom_validation(self):
        design = build_design((2, 1, (2, 2)))
        good = WeightScheme.custom(np.array([0.3, 0.2]))
        np.testing.assert_array_equal(good.resolve(design), [0.3, 0.2])
        with pytest.raises(StructuralError, match="renormalize"):
            WeightScheme.custom(np.array([0.3, 0.3])).resolve(design)
        with pytest.raises(StructuralError, match="nonnegative"):
            WeightScheme.custom(np.array([-0.1, 0.6])).resolve(design)
        with pytest.raises(StructuralError, match="length"):
            WeightScheme.custom(np.array([0.5])).resolve(design)
        with pytest.raises(StructuralError, match="forbid"):
            WeightScheme("household", np.array([0.5, 0.5]))
        with pytest.raises(StructuralError, match="unknown weight scheme"):
            WeightScheme("per-capita")

    def test_normalization_tolerance(self):
        design = build_design((2, 1, (2, 2)))
        almost = np.array([0.25, 0.25]) + 2e-10
        WeightScheme.custom(almost).resolve(design)  # inside tolerance
        off = np.array([0.25, 0.25]) + 2e-9
        with pytest.raises(StructuralError, match="renormalize"):
            WeightScheme.custom(off).resolve(design)


def test_transform_factor():
    design = build_design((4, 2, (2, 3, 2, 4)))
    np.testing.assert_array_equal(
        transform_factor(design, WeightScheme.household()), np.ones(11))
    iw = transform_factor(design, WeightScheme.individual())
    np.testing.assert_allclose(
        iw, np.repeat(4 * design.household_sizes / 11.0,
                      design.household_sizes))


def test_inclusion_weights():
    design = build_design((4, 2, (2, 3, 2, 4)))
    np.testing.assert_allclose(inclusion_weights(design, "11"), [4, 6, 4, 8])
    np.testing.assert_allclose(inclusion_weights(design, "10"),
                               [4, 3, 4, 8 / 3])
    np.testing.assert_allclose(inclusion_weights(design, "00"), [2, 2, 2, 2])
    with pytest.raises(StructuralError, match="unknown cell"):
        inclusion_weights(design, "01")


class TestTrueEffect:
    def test_primary_hand_values(self):
        # equal sizes: household and individual weighting coincide
        design = build_design((2, 1, (2, 2)))
        y00 = np.zeros(4)
        table = PotentialOutcomeTable(design, y11=np.array([1.0, 1, 3, 3]),
                                      y10=np.zeros(4), y00=y00)
        assert true_effect(table, WeightScheme.household(),
                           EffectKind.PRIMARY) == pytest.approx(2.0)
        assert true_effect(table, WeightScheme.individual(),
                           EffectKind.PRIMARY) == pytest.approx(2.0)
        # unequal sizes: they differ
        design = build_design((2, 1, (2, 4)))
        table = PotentialOutcomeTable(
            design, y11=np.array([1.0, 1, 3, 3, 3, 3]),
            y10=np.zeros(6), y00=np.zeros(6))
        assert true_effect(table, WeightScheme.household(),
                           EffectKind.PRIMARY) == pytest.approx(2.0)
        assert true_effect(table, WeightScheme.individual(),
                           EffectKind.PRIMARY) == pytest.approx(7 / 3)

    def test_overall_mixes_cells_by_exposure_shares(self):
        design = build_design((2, 1, (2, 4)))
        base = np.array([0.5, 1.0, -1.0, 0.0, 1.0, 2.0])
        table = PotentialOutcomeTable(design, y11=base + 1.0,
                                      y10=base + 0.25, y00=base)
        # per household: a/n + b(n-1)/n with a=1, b=0.25
        expected_hw = 0.5 * ((1 + 0.25) / 2 + (1 + 3 * 0.25) / 4) * 1  # w*n
        hw = true_effect(table, WeightScheme.household(), EffectKind.OVERALL)
        assert hw == pytest.approx(expected_hw)
        iw = true_effect(table, WeightScheme.individual(), EffectKind.OVERALL)
        assert iw == pytest.approx((2 * (1 + 0.25) / 2 + 4 * (1 + 3 * 0.25) / 4) / 6)

    def test_identical_tables_give_zero(self):
        design = build_design((3, 1, (2, 2, 3)))
        y = np.random.default_rng(5).normal(size=7)
        table = PotentialOutcomeTable(design, y11=y, y10=y, y00=y)
        for effect in EffectKind:
            assert true_effect(table, WeightScheme.household(),
                               effect) == pytest.approx(0.0, abs=1e-15)


class TestStrataSpec:
    def test_by_size_bins(self):
        design = build_design((5, 2, (2, 2, 3, 4, 7)))
        spec = StrataSpec.by_size(design, "2,3,4-7")
        assert spec.labels.tolist() == [0, 0, 1, 2, 2]
        assert spec.names == ("size 2", "size 3", "size 4-7")
        spec = StrataSpec.by_size(design, "2-3,4+")
        assert spec.labels.tolist() == [0, 0, 0, 1, 1]
        assert spec.names == ("size 2-3", "size 4+")

    def test_by_size_drops_unused_bins(self):
        design = build_design((3, 1, (2, 2, 4)))
        spec = StrataSpec.by_size(design, "2,3,4+")
        assert spec.labels.tolist() == [0, 0, 1]
        assert spec.names == ("size 2", "size 4+")

    def test_by_size_errors(self):
        design = build_design((3, 1, (2, 3, 4)))
        with pytest.raises(StructuralError, match="overlap"):
            StrataSpec.by_size(design, "2-3,3+")
        with pytest.raises(StructuralError, match="not covered"):
            StrataSpec.by_size(design, "2,3")
        with pytest.raises(StructuralError, match="cannot parse"):
            StrataSpec.by_size(design, "2,x")
        with pytest.raises(StructuralError, match="empty size range"):
            StrataSpec.by_size(design, "4-2")

    def test_direct_constructor(self):
        spec = StrataSpec(np.array([0, 1, 0]))
        assert spec.num_strata == 2
        assert spec.names == ("stratum0", "stratum1")
        assert spec.households(0).tolist() == [0, 2]
        with pytest.raises(StructuralError, match="contiguous"):
            StrataSpec(np.array([0, 2]))
        with pytest.raises(StructuralError, match="names"):
            StrataSpec(np.array([0, 1]), names=("a",))


def test_enum_parsing():
    assert EffectKind.parse(" Primary ") is EffectKind.PRIMARY
    assert EstimatorFamily.parse("simple_difference") is \
        EstimatorFamily.SIMPLE_DIFFERENCE
    assert EstimatorFamily.parse("post-stratified") is \
        EstimatorFamily.POST_STRATIFIED
    with pytest.raises(StructuralError, match="unknown effect"):
        EffectKind.parse("direct")
    with pytest.raises(StructuralError, match="unknown estimator"):
        EstimatorFamily.parse("ht")


def test_effect_estimate_std_error():
    est = EffectEstimate(EffectKind.PRIMARY, "hw", EstimatorFamily.UNBIASED,
                         1.0, variance=0.25)
    assert est.std_error == pytest.approx(0.5)
    bare = EffectEstimate(EffectKind.PRIMARY, "iw",
                          EstimatorFamily.SIMPLE_DIFFERENCE, 1.0)
    assert bare.std_error is None
