"""Randomization: drawing, counting, and enumerating assignments.

The first stage draws ``N1`` of ``N`` households by complete
randomization (every subset equally likely); the second stage picks one
directly treated member uniformly within each treated household.  The
probability of a full assignment with treated set ``S`` is therefore
``1 / (C(N, N1) * prod_{i in S} n_i)``.

Exact enumeration is exposed for small designs so that expectations over
the randomization distribution can be computed without error; the number
of assignments is checked against a cap first and a
:class:`~twostage.errors.CapacityError` is raised when it would be
exceeded.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Iterator

import numpy as np

from .errors import CapacityError
from .model import Assignment, ExperimentDesign

__all__ = [
    "SeededRng",
    "draw_assignment",
    "count_assignments",
    "count_household_assignments",
    "assignment_probability",
    "enumerate_assignments",
    "enumerate_household_assignments",
    "DEFAULT_MAX_ASSIGNMENTS",
]

DEFAULT_MAX_ASSIGNMENTS = 1_000_000


@dataclass(frozen=True)
class SeededRng:
    """Reproducible random source addressed by ``(seed, stream)``.

    Streams are statistically independent generators derived from the
    same base seed, so replicate ``r`` of simulation cell ``c`` can use
    its own stream and results do not depend on batching or on the order
    in which replicates run.
    """

    seed: int
    stream: int = 0

    @cached_property
    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(seq))

    def spawn(self, stream: int) -> "SeededRng":
        """Sibling source with the same seed and a different stream."""
        return SeededRng(self.seed, stream)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, SeededRng):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return SeededRng(int(rng)).generator


def draw_assignment(design: ExperimentDesign, rng) -> Assignment:
    """Draw one assignment from the two-stage design.

    Parameters
    ----------
    rng : SeededRng, numpy Generator, or int seed

    Notes
    -----
    The draw order is fixed and documented as part of the reproducibility
    contract: first a permutation of households whose first ``N1``
    entries are the treated set, then one uniform member index per
    treated household (in treated-set order).
    """
    gen = _as_generator(rng)
    treated = np.sort(gen.permutation(design.num_households)[:design.num_treated_households])
    member = np.full(design.num_households, -1, dtype=np.int64)
    member[treated] = gen.integers(0, design.household_sizes[treated])
    h = np.zeros(design.num_households, dtype=np.bool_)
    h[treated] = True
    return Assignment(h, member)


def count_household_assignments(design: ExperimentDesign) -> int:
    """Number of first-stage treated sets, ``C(N, N1)``."""
    return comb(design.num_households, design.num_treated_households)


def count_assignments(design: ExperimentDesign) -> int:
    """Exact number of full assignments.

    This is ``sum over treated sets S of prod_{i in S} n_i``, the
    elementary symmetric polynomial of degree ``N1`` in the household
    sizes, computed by dynamic programming in exact integer arithmetic.
    """
    n1 = design.num_treated_households
    e = [0] * (n1 + 1)
    e[0] = 1
    for size in design.household_sizes.tolist():
        for k in range(n1, 0, -1):
            e[k] += e[k - 1] * size
    return e[n1]


def assignment_probability(design: ExperimentDesign,
                           assignment: Assignment) -> float:
    """Probability of one assignment under the two-stage design."""
    assignment.validate(design)
    sizes = design.household_sizes[assignment.treated_households]
    denom = count_household_assignments(design) * np.prod(sizes.astype(np.float64))
    return 1.0 / float(denom)


def _check_cap(count: int, cap: int | None, what: str) -> None:
    if cap is not None and count > cap:
        raise CapacityError(
            f"enumeration of {count} {what} exceeds the cap of {cap}; "
            "raise max_assignments to force the computation")


def enumerate_household_assignments(
    design: ExperimentDesign, *, max_assignments: int | None = DEFAULT_MAX_ASSIGNMENTS,
) -> Iterator[tuple[np.ndarray, float]]:
    """Yield every first-stage treated set with its probability.

    Yields ``(treated_indices, probability)`` in lexicographic order;
    probabilities are the constant ``1 / C(N, N1)``.
    """
    total = count_household_assignments(design)
    _check_cap(total, max_assignments, "first-stage assignments")
    prob = 1.0 / total
    households = range(design.num_households)
    for subset in itertools.combinations(households, design.num_treated_households):
        yield np.asarray(subset, dtype=np.int64), prob


def enumerate_assignments(
    design: ExperimentDesign, *, max_assignments: int | None = DEFAULT_MAX_ASSIGNMENTS,
) -> Iterator[tuple[Assignment, float]]:
    """Yield every full assignment with its probability.

    Order is deterministic: treated sets in lexicographic order, member
    choices in product order within each treated set.  Probabilities sum
    to one exactly up to float rounding.
    """
    total = count_assignments(design)
    _check_cap(total, max_assignments, "assignments")
    first_stage_prob = 1.0 / count_household_assignments(design)
    households = range(design.num_households)
    sizes = design.household_sizes
    for subset in itertools.combinations(households, design.num_treated_households):
        treated = np.asarray(subset, dtype=np.int64)
        h = np.zeros(design.num_households, dtype=np.bool_)
        h[treated] = True
        second_stage = 1.0 / float(np.prod(sizes[treated].astype(np.float64)))
        prob = first_stage_prob * second_stage
        ranges = [range(int(sizes[i])) for i in subset]
        for choice in itertools.product(*ranges):
            member = np.full(design.num_households, -1, dtype=np.int64)
            member[treated] = choice
            yield Assignment(h, member), prob
