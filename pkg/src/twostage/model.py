"""Core data model for two-stage randomized household experiments.

The design randomizes at two levels.  First a fixed number of households
is assigned to treatment by complete randomization; then exactly one
member of every treated household is picked uniformly at random to
receive the intervention directly.  Individuals therefore occupy one of
three observational cells:

* ``(1, 1)`` -- directly treated member of a treated household,
* ``(1, 0)`` -- untreated member of a treated household (exposed only
  through within-household spillover),
* ``(0, 0)`` -- member of a control household.

Interference is assumed to stop at the household boundary, so each
individual carries three potential outcomes, one per cell, and the
observed outcome is determined by the cell the assignment puts the
individual in.

Estimands are weighted sums of household-level contrasts.  A weight
scheme assigns each household ``i`` a weight ``w_i`` normalized so that
``sum_i w_i * n_i == 1`` where ``n_i`` is the household size; the two
named schemes are household weighting (``w_i = 1 / (N * n_i)``, every
household counts equally) and individual weighting (``w_i = 1 / n_plus``,
every person counts equally).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import StructuralError

__all__ = [
    "ExperimentDesign",
    "Assignment",
    "PotentialOutcomeTable",
    "ObservedData",
    "WeightScheme",
    "EffectKind",
    "EstimatorFamily",
    "EffectEstimate",
    "StrataSpec",
    "true_effect",
    "inclusion_weights",
    "transform_factor",
]

_WEIGHT_NORMALIZATION_TOL = 1e-9


def _frozen_array(values, dtype) -> np.ndarray:
    out = np.ascontiguousarray(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ExperimentDesign:
    """Sizes and first-stage treatment allocation of the experiment.

    Parameters
    ----------
    num_households : int
        Total number of households ``N``.
    num_treated_households : int
        Number of households assigned to treatment ``N1``; must leave at
        least one control household.
    household_sizes : array_like of int
        Number of members of each household.  Every household needs at
        least two members, otherwise the spillover cell is empty and the
        spillover effect is undefined.
    """

    num_households: int
    num_treated_households: int
    household_sizes: np.ndarray

    def __post_init__(self):
        sizes = np.asarray(self.household_sizes)
        if sizes.ndim != 1:
            raise StructuralError("household_sizes must be one-dimensional")
        if sizes.shape[0] != self.num_households:
            raise StructuralError(
                f"household_sizes has length {sizes.shape[0]}, "
                f"expected num_households={self.num_households}"
            )
        if not np.issubdtype(sizes.dtype, np.integer):
            rounded = np.rint(np.asarray(sizes, dtype=float))
            if not np.array_equal(rounded, np.asarray(sizes, dtype=float)):
                raise StructuralError("household sizes must be integers")
            sizes = rounded
        object.__setattr__(self, "household_sizes", _frozen_array(sizes, np.int64))
        if self.num_households < 2:
            raise StructuralError("need at least two households")
        if not 1 <= self.num_treated_households <= self.num_households - 1:
            raise StructuralError(
                "num_treated_households must leave at least one treated "
                "and one control household"
            )
        if (self.household_sizes < 2).any():
            bad = int(np.argmax(self.household_sizes < 2))
            raise StructuralError(
                f"household {bad} has size {int(self.household_sizes[bad])}; "
                "all households must have at least two members"
            )

    @classmethod
    def equal_sizes(cls, num_households: int, num_treated_households: int,
                    household_size: int) -> "ExperimentDesign":
        """Build a design in which every household has the same size."""
        sizes = np.full(num_households, household_size, dtype=np.int64)
        return cls(num_households, num_treated_households, sizes)

    @property
    def num_control_households(self) -> int:
        return self.num_households - self.num_treated_households

    @cached_property
    def num_individuals(self) -> int:
        """Total number of individuals ``n_plus``."""
        return int(self.household_sizes.sum())

    @property
    def mean_household_size(self) -> float:
        return self.num_individuals / self.num_households

    @cached_property
    def household_offsets(self) -> np.ndarray:
        """Start offset of each household in flat individual arrays.

        ``household_offsets[i]:household_offsets[i + 1]`` slices out the
        members of household ``i``; the array has length ``N + 1``.
        """
        offsets = np.zeros(self.num_households + 1, dtype=np.int64)
        np.cumsum(self.household_sizes, out=offsets[1:])
        offsets.setflags(write=False)
        return offsets

    @cached_property
    def member_household(self) -> np.ndarray:
        """Household index of each individual, flat ``(n_plus,)``."""
        return _frozen_array(
            np.repeat(np.arange(self.num_households), self.household_sizes),
            np.int64,
        )

    def members(self, household: int) -> slice:
        """Slice of flat individual arrays holding one household."""
        return slice(int(self.household_offsets[household]),
                     int(self.household_offsets[household + 1]))

    def has_equal_sizes(self) -> bool:
        return bool((self.household_sizes == self.household_sizes[0]).all())


@dataclass(frozen=True)
class Assignment:
    """One realized treatment assignment.

    Attributes
    ----------
    household_treated : ndarray of bool, shape (N,)
        First-stage indicator per household.
    treated_member : ndarray of int, shape (N,)
        Within-household index of the directly treated member for
        treated households; ``-1`` for control households.
    """

    household_treated: np.ndarray
    treated_member: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "household_treated",
            _frozen_array(self.household_treated, np.bool_))
        object.__setattr__(
            self, "treated_member", _frozen_array(self.treated_member, np.int64))

    def validate(self, design: ExperimentDesign) -> None:
        h, t = self.household_treated, self.treated_member
        if h.shape != (design.num_households,) or t.shape != h.shape:
            raise StructuralError("assignment arrays must have one entry per household")
        if int(h.sum()) != design.num_treated_households:
            raise StructuralError(
                f"assignment treats {int(h.sum())} households, "
                f"design requires {design.num_treated_households}"
            )
        if (t[~h] != -1).any():
            raise StructuralError("control households must have treated_member == -1")
        sizes = design.household_sizes
        if ((t[h] < 0) | (t[h] >= sizes[h])).any():
            raise StructuralError("treated_member out of range for a treated household")

    @property
    def treated_households(self) -> np.ndarray:
        return np.flatnonzero(self.household_treated)

    @property
    def control_households(self) -> np.ndarray:
        return np.flatnonzero(~self.household_treated)

    def individual_indicators(self, design: ExperimentDesign):
        """Expand to flat per-individual indicators ``(h, z)``."""
        h_flat = np.repeat(self.household_treated, design.household_sizes)
        z_flat = np.zeros(design.num_individuals, dtype=np.bool_)
        treated = self.treated_households
        z_flat[design.household_offsets[treated] + self.treated_member[treated]] = True
        return h_flat, z_flat


@dataclass(frozen=True)
class PotentialOutcomeTable:
    """Full table of the three potential outcomes of every individual.

    The flat arrays are ordered household by household, members in
    household order (``design.members(i)`` slices one household).

    Attributes
    ----------
    y11, y10, y00 : ndarray of float, shape (n_plus,)
        Potential outcome when the individual is directly treated, an
        untreated member of a treated household, or a member of a
        control household, respectively.
    """

    design: ExperimentDesign
    y11: np.ndarray
    y10: np.ndarray
    y00: np.ndarray

    def __post_init__(self):
        n = self.design.num_individuals
        for name in ("y11", "y10", "y00"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise StructuralError(
                    f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.isfinite(arr).all():
                raise StructuralError(f"{name} contains non-finite values")
            object.__setattr__(self, name, _frozen_array(arr, np.float64))

    def household_means(self, cell: str) -> np.ndarray:
        """Household means of one potential-outcome column, shape (N,)."""
        y = {"11": self.y11, "10": self.y10, "00": self.y00}[cell]
        design = self.design
        sums = np.add.reduceat(y, design.household_offsets[:-1])
        return sums / design.household_sizes

    def observe(self, assignment: Assignment) -> "ObservedData":
        """Apply the observation rule to one assignment.

        Every individual reveals the potential outcome of the cell the
        assignment places them in.
        """
        assignment.validate(self.design)
        h_flat, z_flat = assignment.individual_indicators(self.design)
        outcome = np.where(h_flat, np.where(z_flat, self.y11, self.y10), self.y00)
        return ObservedData(
            household=self.design.member_household,
            household_treated=h_flat,
            individual_treated=z_flat,
            outcome=outcome,
        )


@dataclass(frozen=True)
class ObservedData:
    """Observed outcomes in canonical flat order.

    Rows are grouped by household (household indices nondecreasing and
    contiguous starting at zero).  ``household_treated`` must be constant
    within each household, treated households must contain exactly one
    directly treated member, and control households none.

    Attributes
    ----------
    household : ndarray of int, shape (n_plus,)
    household_treated, individual_treated : ndarray of bool, shape (n_plus,)
    outcome : ndarray of float, shape (n_plus,)
    covariates : ndarray of float, shape (n_plus, K), optional
    covariate_names : tuple of str, optional
    """

    household: np.ndarray
    household_treated: np.ndarray
    individual_treated: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray | None = None
    covariate_names: tuple[str, ...] | None = None

    def __post_init__(self):
        household = np.asarray(self.household)
        object.__setattr__(self, "household", _frozen_array(household, np.int64))
        object.__setattr__(
            self, "household_treated",
            _frozen_array(self.household_treated, np.bool_))
        object.__setattr__(
            self, "individual_treated",
            _frozen_array(self.individual_treated, np.bool_))
        outcome = np.asarray(self.outcome, dtype=np.float64)
        if not np.isfinite(outcome).all():
            raise StructuralError("outcome contains non-finite values")
        object.__setattr__(self, "outcome", _frozen_array(outcome, np.float64))
        n = self.household.shape[0]
        for name in ("household_treated", "individual_treated", "outcome"):
            if getattr(self, name).shape != (n,):
                raise StructuralError(f"{name} must match household in length")
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != n:
                raise StructuralError(
                    f"covariates must have shape (n_plus, K), got {cov.shape}")
            if not np.isfinite(cov).all():
                raise StructuralError("covariates contain non-finite values")
            object.__setattr__(self, "covariates", _frozen_array(cov, np.float64))
            if self.covariate_names is not None:
                names = tuple(self.covariate_names)
                if len(names) != cov.shape[1]:
                    raise StructuralError(
                        "covariate_names must match covariate columns")
                object.__setattr__(self, "covariate_names", names)
        elif self.covariate_names is not None:
            raise StructuralError("covariate_names given without covariates")
        self._check_structure()

    def _check_structure(self) -> None:
        hh = self.household
        if hh.shape[0] == 0:
            raise StructuralError("data set is empty")
        if (np.diff(hh) < 0).any():
            raise StructuralError("rows must be grouped by household (sorted)")
        ids = np.unique(hh)
        if ids[0] != 0 or ids[-1] != ids.shape[0] - 1:
            raise StructuralError("household ids must be contiguous from 0")
        sizes = np.bincount(hh)
        if (sizes < 2).any():
            bad = int(np.argmax(sizes < 2))
            raise StructuralError(
                f"household {bad} has {int(sizes[bad])} member(s); "
                "at least two are required")
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        first = self.household_treated[offsets[:-1]]
        same = np.repeat(first, sizes)
        if (same != self.household_treated).any():
            raise StructuralError(
                "household_treated must be constant within a household")
        z_per_house = np.add.reduceat(
            self.individual_treated.astype(np.int64), offsets[:-1])
        if (z_per_house[first] != 1).any():
            bad = int(np.flatnonzero(first)[np.argmax(z_per_house[first] != 1)])
            raise StructuralError(
                f"treated household {bad} must have exactly one directly "
                f"treated member, found {int(z_per_house[bad])}")
        if (z_per_house[~first] != 0).any():
            bad = int(np.flatnonzero(~first)[np.argmax(z_per_house[~first] != 0)])
            raise StructuralError(
                f"control household {bad} contains a directly treated member")
        n1 = int(first.sum())
        if n1 == 0 or n1 == first.shape[0]:
            raise StructuralError(
                "need at least one treated and one control household")

    @cached_property
    def design(self) -> ExperimentDesign:
        """Design implied by the data."""
        sizes = np.bincount(self.household)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        n1 = int(self.household_treated[offsets[:-1]].sum())
        return ExperimentDesign(len(sizes), n1, sizes)

    @cached_property
    def assignment(self) -> Assignment:
        design = self.design
        first = self.household_treated[design.household_offsets[:-1]]
        member = np.full(design.num_households, -1, dtype=np.int64)
        z_idx = np.flatnonzero(self.individual_treated)
        member[self.household[z_idx]] = z_idx - design.household_offsets[self.household[z_idx]]
        return Assignment(first, member)

    def with_outcome(self, outcome: np.ndarray) -> "ObservedData":
        """Copy of the data with the outcome column replaced."""
        return replace(self, outcome=np.asarray(outcome, dtype=np.float64))

    def subset_households(self, keep: np.ndarray) -> "ObservedData":
        """Restrict to the given households, relabelling them 0..k-1.

        Parameters
        ----------
        keep : array of household indices (sorted order is preserved).
        """
        keep = np.asarray(keep, dtype=np.int64)
        mask = np.isin(self.household, keep)
        relabel = np.full(int(self.household.max()) + 1, -1, dtype=np.int64)
        relabel[np.sort(keep)] = np.arange(len(keep))
        return ObservedData(
            household=relabel[self.household[mask]],
            household_treated=self.household_treated[mask],
            individual_treated=self.individual_treated[mask],
            outcome=self.outcome[mask],
            covariates=None if self.covariates is None else self.covariates[mask],
            covariate_names=self.covariate_names,
        )


class EffectKind(enum.Enum):
    """Which household-level contrast is targeted."""

    PRIMARY = "primary"
    SPILLOVER = "spillover"
    OVERALL = "overall"

    @classmethod
    def parse(cls, text: str) -> "EffectKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise StructuralError(f"unknown effect {text!r}; expected one of {valid}")


class EstimatorFamily(enum.Enum):
    """Estimation strategy."""

    UNBIASED = "unbiased"
    HAJEK = "hajek"
    SIMPLE_DIFFERENCE = "simple-difference"
    POST_STRATIFIED = "post-stratified"
    MODEL_ASSISTED = "model-assisted"
    REGRESSION = "regression"

    @classmethod
    def parse(cls, text: str) -> "EstimatorFamily":
        key = text.strip().lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise StructuralError(
                f"unknown estimator {text!r}; expected one of {valid}")


@dataclass(frozen=True)
class WeightScheme:
    """Household weights defining the target estimand.

    ``resolve`` produces the per-household weights ``w_i`` normalized so
    that ``sum_i w_i * n_i == 1``.
    """

    kind: str
    weights: np.ndarray | None = None

    _KINDS = ("household", "individual", "custom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise StructuralError(
                f"unknown weight scheme kind {self.kind!r}")
        if (self.kind == "custom") != (self.weights is not None):
            raise StructuralError(
                "custom schemes require weights; named schemes forbid them")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1:
                raise StructuralError("weights must be one-dimensional")
            object.__setattr__(self, "weights", _frozen_array(w, np.float64))

    @classmethod
    def household(cls) -> "WeightScheme":
        """Every household counts equally: ``w_i = 1 / (N * n_i)``."""
        return cls("household")

    @classmethod
    def individual(cls) -> "WeightScheme":
        """Every individual counts equally: ``w_i = 1 / n_plus``."""
        return cls("individual")

    @classmethod
    def custom(cls, weights) -> "WeightScheme":
        return cls("custom", weights)

    @property
    def label(self) -> str:
        return {"household": "hw", "individual": "iw", "custom": "custom"}[self.kind]

    def resolve(self, design: ExperimentDesign) -> np.ndarray:
        """Per-household weight vector ``(N,)`` for a concrete design."""
        n = design.household_sizes
        if self.kind == "household":
            return 1.0 / (design.num_households * n.astype(np.float64))
        if self.kind == "individual":
            return np.full(design.num_households, 1.0 / design.num_individuals)
        w = self.weights
        if w.shape[0] != design.num_households:
            raise StructuralError(
                f"custom weights have length {w.shape[0]}, "
                f"design has {design.num_households} households")
        if not np.isfinite(w).all() or (w < 0).any():
            raise StructuralError("custom weights must be finite and nonnegative")
        total = float(w @ n)
        if abs(total - 1.0) > _WEIGHT_NORMALIZATION_TOL:
            raise StructuralError(
                f"custom weights must satisfy sum_i w_i * n_i == 1 "
                f"(got {total!r}); renormalize before passing them in")
        return np.asarray(w, dtype=np.float64)


def transform_factor(design: ExperimentDesign, scheme: WeightScheme) -> np.ndarray:
    """Per-individual outcome transform ``N * n_i * w_i``, flat (n_plus,).

    Multiplying outcomes by this factor reduces every weighted estimator
    in the package to an equally weighted contrast of household cell
    means; household weighting leaves outcomes unchanged.
    """
    w = scheme.resolve(design)
    per_house = design.num_households * design.household_sizes * w
    return np.repeat(per_house, design.household_sizes)


def inclusion_weights(design: ExperimentDesign, cell: str) -> np.ndarray:
    """Inverse inclusion probability of one observational cell, per household.

    For cell ``"11"`` the probability that a given individual is directly
    treated is ``(N1 / N) * (1 / n_i)``; for ``"10"`` it is
    ``(N1 / N) * (n_i - 1) / n_i``; for ``"00"`` it is ``N0 / N``.
    """
    n = design.household_sizes.astype(np.float64)
    big_n = design.num_households
    n1 = design.num_treated_households
    n0 = design.num_control_households
    if cell == "11":
        return big_n / n1 * n
    if cell == "10":
        return big_n / n1 * n / (n - 1.0)
    if cell == "00":
        return np.full(design.num_households, big_n / n0, dtype=np.float64)
    raise StructuralError(f"unknown cell {cell!r}")


def true_effect(table: PotentialOutcomeTable, scheme: WeightScheme,
                effect: EffectKind) -> float:
    """Finite-population estimand of one effect under one weight scheme.

    The primary effect contrasts direct treatment with control,
    ``sum_i w_i sum_j (y11_ij - y00_ij)``; the spillover effect contrasts
    the untreated-member cell with control; the overall effect averages
    the two within each household according to the second-stage
    probabilities, ``sum_i w_i sum_j ((1/n_i) y11_ij +
    ((n_i - 1)/n_i) y10_ij - y00_ij)``.
    """
    design = table.design
    w = scheme.resolve(design)
    if effect is EffectKind.PRIMARY:
        diff = table.y11 - table.y00
    elif effect is EffectKind.SPILLOVER:
        diff = table.y10 - table.y00
    elif effect is EffectKind.OVERALL:
        inv_n = np.repeat(1.0 / design.household_sizes, design.household_sizes)
        diff = inv_n * table.y11 + (1.0 - inv_n) * table.y10 - table.y00
    else:  # pragma: no cover - exhaustive over the enum
        raise StructuralError(f"unknown effect {effect!r}")
    per_house = np.add.reduceat(diff, design.household_offsets[:-1])
    return float(w @ per_house)


@dataclass(frozen=True)
class StrataSpec:
    """Partition of households into strata.

    Attributes
    ----------
    labels : ndarray of int, shape (N,)
        Stratum code of each household, in ``0..num_strata - 1``.
    names : tuple of str
        Human-readable stratum names, indexed by code.
    """

    labels: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] == 0:
            raise StructuralError("stratum labels must be a nonempty vector")
        k = int(labels.max()) + 1
        if labels.min() < 0 or len(np.unique(labels)) != k:
            raise StructuralError(
                "stratum codes must be contiguous integers starting at 0")
        object.__setattr__(self, "labels", _frozen_array(labels, np.int64))
        names = tuple(self.names) if self.names else tuple(
            f"stratum{c}" for c in range(k))
        if len(names) != k:
            raise StructuralError("names must match the number of strata")
        object.__setattr__(self, "names", names)

    @property
    def num_strata(self) -> int:
        return len(self.names)

    def households(self, code: int) -> np.ndarray:
        return np.flatnonzero(self.labels == code)

    @classmethod
    def by_size(cls, design: ExperimentDesign, spec: str) -> "StrataSpec":
        """Stratify households by size.

        ``spec`` is a comma-separated list of bins: a single size
        (``"3"``), an inclusive range (``"4-7"``), or an open-ended range
        (``"4+"``).  Bins must not overlap and must cover every household
        size present in the design.
        """
        bins: list[tuple[int, int | None]] = []
        for token in spec.split(","):
            token = token.strip()
            if not token:
                raise StructuralError("empty stratum bin in size specification")
            try:
                if token.endswith("+"):
                    bins.append((int(token[:-1]), None))
                elif "-" in token[1:]:
                    lo, hi = token.split("-", 1)
                    bins.append((int(lo), int(hi)))
                else:
                    bins.append((int(token), int(token)))
            except ValueError:
                raise StructuralError(f"cannot parse stratum bin {token!r}")
        for lo, hi in bins:
            if hi is not None and hi < lo:
                raise StructuralError(f"empty size range {lo}-{hi}")
        labels = np.full(design.num_households, -1, dtype=np.int64)
        for code, (lo, hi) in enumerate(bins):
            mask = design.household_sizes >= lo
            if hi is not None:
                mask &= design.household_sizes <= hi
            if (labels[mask] != -1).any():
                raise StructuralError("size strata overlap")
            labels[mask] = code
        if (labels == -1).any():
            size = int(design.household_sizes[int(np.argmax(labels == -1))])
            raise StructuralError(
                f"household size {size} is not covered by strata {spec!r}")
        used = np.unique(labels)
        remap = np.full(len(bins), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        names = []
        for code, (lo, hi) in enumerate(bins):
            if code not in used:
                continue
            if hi is None:
                names.append(f"size {lo}+")
            elif hi == lo:
                names.append(f"size {lo}")
            else:
                names.append(f"size {lo}-{hi}")
        return cls(remap[labels], tuple(names))


@dataclass(frozen=True)
class EffectEstimate:
    """One estimated effect with optional variance and interval."""

    effect: EffectKind
    scheme: str
    family: EstimatorFamily
    point: float
    variance: float | None = None
    ci_level: float | None = None
    interval: tuple[float, float] | None = None

    @property
    def std_error(self) -> float | None:
        if self.variance is None:
            return None
        return float(np.sqrt(self.variance))
