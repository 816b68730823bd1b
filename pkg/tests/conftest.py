"""Shared fixtures: small designs plus brute-force enumeration helpers.

The enumeration here is written independently of the package's own
``enumerate_assignments`` (plain itertools over treated subsets and
member choices, probabilities from the counting formula) so the two
routes check each other.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from twostage.model import Assignment, ExperimentDesign, PotentialOutcomeTable

# Five mixed-size designs small enough for exact enumeration, plus two
# equal-size designs for the identities that require them.
MIXED_DESIGNS = [
    (4, 2, (2, 3, 2, 4)),
    (4, 2, (2, 2, 3, 3)),
    (5, 2, (2, 2, 3, 3, 4)),
    (5, 3, (3, 4, 2, 3, 2)),
    (5, 2, (4, 4, 3, 2, 2)),
]
EQUAL_DESIGNS = [
    (4, 2, (2, 2, 2, 2)),
    (5, 3, (3, 3, 3, 3, 3)),
]


def build_design(spec) -> ExperimentDesign:
    n, n1, sizes = spec
    return ExperimentDesign(num_households=n, num_treated_households=n1,
                            household_sizes=np.asarray(sizes, dtype=np.int64))


def build_table(design: ExperimentDesign, seed: int,
                effect_sd: float = 0.8) -> PotentialOutcomeTable:
    """Random potential outcomes with household-level heterogeneity.

    Household base levels and effects vary across households so that
    between-household variance components are nonzero; ``effect_sd=0``
    gives constant household-mean effects.
    """
    gen = np.random.default_rng(seed)
    sizes = design.household_sizes
    base = np.repeat(gen.normal(1.0, 1.0, design.num_households), sizes)
    shift_p = np.repeat(gen.normal(2.0, effect_sd, design.num_households), sizes)
    shift_s = np.repeat(gen.normal(0.8, effect_sd, design.num_households), sizes)
    noise = gen.normal(0.0, 0.5, (3, design.num_individuals))
    return PotentialOutcomeTable(
        design,
        y11=base + shift_p + noise[0],
        y10=base + shift_s + noise[1],
        y00=base + noise[2],
    )


def iter_assignments(design: ExperimentDesign):
    """Brute-force walk of the randomization distribution.

    Yields ``(Assignment, probability)`` for every valid assignment:
    each size-``N1`` treated subset with probability ``1 / C(N, N1)``,
    each member choice within it with probability ``1 / n_i``.
    """
    n = design.num_households
    n1 = design.num_treated_households
    sizes = design.household_sizes
    subsets = math.comb(n, n1)
    for subset in itertools.combinations(range(n), n1):
        prob = 1.0 / (subsets * math.prod(int(sizes[i]) for i in subset))
        member_ranges = [range(int(sizes[i])) for i in subset]
        for members in itertools.product(*member_ranges):
            treated = np.zeros(n, dtype=np.bool_)
            member = np.full(n, -1, dtype=np.int64)
            for house, m in zip(subset, members):
                treated[house] = True
                member[house] = m
            yield Assignment(household_treated=treated,
                             treated_member=member), prob


def exact_mean_var(pairs) -> tuple[float, float]:
    """Exact mean and variance of ``(value, probability)`` pairs."""
    pairs = list(pairs)
    mean = sum(p * v for v, p in pairs)
    var = sum(p * (v - mean) ** 2 for v, p in pairs)
    return mean, var


@pytest.fixture
def mixed_data():
    """One realized data set on a mixed-size design."""
    design = build_design(MIXED_DESIGNS[0])
    table = build_table(design, seed=101)
    treated = np.array([True, False, True, False])
    member = np.array([1, -1, 0, -1], dtype=np.int64)
    return table.observe(Assignment(treated, member))


@pytest.fixture
def equal_data():
    """One realized data set on an equal-size design."""
    design = build_design(EQUAL_DESIGNS[1])
    table = build_table(design, seed=202)
    treated = np.array([True, False, True, False, True])
    member = np.array([2, -1, 0, -1, 1], dtype=np.int64)
    return table.observe(Assignment(treated, member))
