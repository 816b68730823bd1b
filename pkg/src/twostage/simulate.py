"""Monte Carlo studies of estimator behavior.

Two studies are provided: a coverage study on equal-size households
comparing household-level, unclustered-robust, and homoskedastic
variance flavors across a grid of design sizes and variance mixes, and
a bias study on mixed household sizes comparing the weighted, simple
difference, and size post-stratified estimators.

Reproducibility contract
------------------------
Every replicate draws from its own random stream addressed as
``(cell_index << 32) | replicate`` on top of the study seed, so results
do not depend on execution order or batching.  Within a replicate the
draw order is fixed:

1. household sizes (mixed-size study only), as indices into the size
   options;
2. household control means;
3. household primary effects;
4. household spillover effects;
5. individual noise, one ``(N, max_size, 3)`` block with cells ordered
   ``(0,0)``, ``(1,0)``, ``(1,1)``;
6. a permutation of households whose first ``N1`` entries are treated;
7. one member index per treated household.

With ``fixed_table=True`` steps 1-5 run once per cell in the dedicated
stream ``(cell_index << 32) | 0xFFFFFFFF`` and the per-replicate streams
only draw the assignment.  Coverage always targets the replicate's own
finite-population contrast, which is constant across replicates exactly
in that mode.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import kernels
from .errors import EstimationError, StructuralError
from .randomize import SeededRng
from .variance import normal_quantile

__all__ = [
    "StudyResult",
    "CoverageStudyConfig",
    "SizeBiasStudyConfig",
    "run_coverage_study",
    "run_size_bias_study",
]

_TABLE_STREAM = 0xFFFFFFFF
_MAX_REPLICATIONS = _TABLE_STREAM - 1


@dataclass
class StudyResult:
    """Tabular study output plus free-form metadata."""

    columns: tuple[str, ...]
    rows: list[tuple]
    meta: dict

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in row])
        return buffer.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            handle.write(self.to_csv_text())

    def to_json_dict(self) -> dict:
        return {"columns": list(self.columns),
                "rows": [list(r) for r in self.rows],
                "meta": self.meta}

    def format_table(self) -> str:
        def fmt(v):
            if isinstance(v, float):
                return f"{v:.4f}"
            return str(v)

        cells = [[fmt(v) for v in row] for row in self.rows]
        widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c)
                  for i, c in enumerate(self.columns)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(self.columns, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in cells:
            lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


def _check_replications(replications: int) -> None:
    if not 1 <= replications <= _MAX_REPLICATIONS:
        raise StructuralError(
            f"replications must be between 1 and {_MAX_REPLICATIONS}")


def _cell_generator(seed: int, cell: int, replicate: int) -> np.random.Generator:
    return SeededRng(seed, (cell << 32) | replicate).generator


def _draw_assignment_arrays(gen: np.random.Generator, num_households: int,
                            num_treated: int, sizes: np.ndarray):
    chosen = gen.permutation(num_households)[:num_treated]
    member = np.full(num_households, -1, dtype=np.int64)
    member[chosen] = gen.integers(0, sizes[chosen])
    h = np.zeros(num_households, dtype=np.uint8)
    h[chosen] = 1
    return h, member


# ---------------------------------------------------------------------------
# coverage study (equal household sizes)


@dataclass(frozen=True)
class CoverageStudyConfig:
    """Grid for the interval-coverage comparison.

    ``sigma_between`` scales the household-level effect and mean
    heterogeneity, ``sigma_within`` the individual noise; their mix
    determines the within-household correlation
    ``sigma_between^2 / (sigma_between^2 + sigma_within^2)`` that drives
    the failure of unclustered inference.
    """

    num_households: tuple[int, ...] = (50, 100, 500, 1000)
    treated_fraction: float = 0.5
    household_size: int = 4
    sigma_between: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    sigma_within: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    control_mean: float = 2.0
    primary_effect: float = 1.5
    spillover_effect: float = 0.7
    replications: int = 2000
    ci_level: float = 0.95
    seed: int = 0
    fixed_table: bool = False

    def __post_init__(self):
        _check_replications(self.replications)
        if self.household_size < 2:
            raise StructuralError("household_size must be at least 2")
        if not 0.0 < self.treated_fraction < 1.0:
            raise StructuralError("treated_fraction must be in (0, 1)")
        for n in self.num_households:
            n1 = int(round(n * self.treated_fraction))
            if not 1 <= n1 <= n - 1:
                raise StructuralError(
                    f"treated_fraction {self.treated_fraction} leaves no "
                    f"treated or no control households for N={n}")
        if not 0.0 < self.ci_level < 1.0:
            raise StructuralError("ci_level must be in (0, 1)")


def _draw_equal_size_table(gen: np.random.Generator, num_households: int,
                           size: int, config: CoverageStudyConfig,
                           s_between: float, s_within: float):
    base = gen.normal(config.control_mean, s_between, num_households)
    tau_p = gen.normal(config.primary_effect, s_between, num_households)
    tau_s = gen.normal(config.spillover_effect, s_between, num_households)
    eps = gen.normal(0.0, s_within, (num_households, size, 3))
    y00 = base[:, None] + eps[:, :, 0]
    y10 = (base + tau_s)[:, None] + eps[:, :, 1]
    y11 = (base + tau_p)[:, None] + eps[:, :, 2]
    return y11, y10, y00


def run_coverage_study(config: CoverageStudyConfig) -> StudyResult:
    """Run the coverage grid; one row per cell.

    Per cell, the fraction of replicates whose normal-approximation
    interval covers the replicate's true contrast is reported for the
    three variance flavors and both effects.  The metadata carries
    unweighted aggregates over cells and the coverage profile of the
    unclustered flavor along the within-household correlation.
    """
    z = normal_quantile(0.5 + config.ci_level / 2.0)
    columns = ("num_households", "sigma_between", "sigma_within", "icc",
               "cluster_primary", "cluster_spillover", "hc2_primary",
               "hc2_spillover", "nominal_primary", "nominal_spillover")
    rows: list[tuple] = []
    cells = list(product(config.num_households, config.sigma_between,
                         config.sigma_within))
    size = config.household_size
    for cell_index, (n, s_between, s_within) in enumerate(cells):
        n1 = int(round(n * config.treated_fraction))
        sizes = np.full(n, size, dtype=np.int64)
        fixed = None
        if config.fixed_table:
            table_gen = _cell_generator(config.seed, cell_index, _TABLE_STREAM)
            fixed = _draw_equal_size_table(table_gen, n, size, config,
                                           s_between, s_within)
        stats = np.empty((config.replications, 10))
        for rep in range(config.replications):
            gen = _cell_generator(config.seed, cell_index, rep)
            if fixed is None:
                y11, y10, y00 = _draw_equal_size_table(gen, n, size, config,
                                                       s_between, s_within)
            else:
                y11, y10, y00 = fixed
            h, member = _draw_assignment_arrays(gen, n, n1, sizes)
            stats[rep] = kernels.coverage_replicate_stats(y11, y10, y00, h, member)
        err_p = stats[:, 0] - stats[:, 8]
        err_s = stats[:, 1] - stats[:, 9]
        covered = [
            np.abs(err_p) <= z * np.sqrt(stats[:, 2]),
            np.abs(err_s) <= z * np.sqrt(stats[:, 3]),
            np.abs(err_p) <= z * np.sqrt(stats[:, 4]),
            np.abs(err_s) <= z * np.sqrt(stats[:, 5]),
            np.abs(err_p) <= z * np.sqrt(stats[:, 6]),
            np.abs(err_s) <= z * np.sqrt(stats[:, 7]),
        ]
        icc = s_between ** 2 / (s_between ** 2 + s_within ** 2)
        rows.append((n, s_between, s_within, icc,
                     *(float(c.mean()) for c in covered)))

    flavor_cols = {"cluster": (4, 5), "hc2": (6, 7), "nominal": (8, 9)}
    aggregate = {
        flavor: {
            "primary": float(np.mean([r[i] for r in rows])),
            "spillover": float(np.mean([r[j] for r in rows])),
        }
        for flavor, (i, j) in flavor_cols.items()
    }
    profile = {}
    for row in rows:
        profile.setdefault(round(row[3], 12), []).append((row[6], row[7]))
    icc_profile = [
        {"icc": icc,
         "hc2_primary": float(np.mean([p for p, _ in pairs])),
         "hc2_spillover": float(np.mean([s for _, s in pairs])),
         "cells": len(pairs)}
        for icc, pairs in sorted(profile.items())
    ]
    meta = {
        "study": "coverage",
        "backend": kernels.backend,
        "replications": config.replications,
        "ci_level": config.ci_level,
        "seed": config.seed,
        "fixed_table": config.fixed_table,
        "aggregate_coverage": aggregate,
        "icc_profile": icc_profile,
    }
    return StudyResult(columns, rows, meta)


# ---------------------------------------------------------------------------
# mixed-size bias study


_SCENARIOS = ("constant", "by-size")
_BY_SIZE_DEFAULTS = {
    # size: (control mean, primary effect, spillover effect)
    2: (2.0, 1.5, 0.7),
    3: (1.0, 0.75, 0.35),
    4: (0.5, 0.37, 0.17),
}


@dataclass(frozen=True)
class SizeBiasStudyConfig:
    """Setup for the mixed-size bias comparison.

    Household sizes are drawn uniformly from ``sizes``.  Under the
    ``"constant"`` scenario every size shares the same outcome
    parameters; under ``"by-size"`` the parameters differ by household
    size (defaults follow a pattern where larger households have
    smaller means and effects), which is what separates the estimators.
    """

    num_households: int = 200
    num_treated_households: int = 100
    sizes: tuple[int, ...] = (2, 3, 4)
    scenario: str = "by-size"
    control_means: tuple[float, ...] | None = None
    primary_effects: tuple[float, ...] | None = None
    spillover_effects: tuple[float, ...] | None = None
    sigma_between: float = 0.3
    sigma_within: float = 0.3
    replications: int = 2000
    seed: int = 0
    fixed_table: bool = False

    def __post_init__(self):
        _check_replications(self.replications)
        if self.scenario not in _SCENARIOS:
            raise StructuralError(
                f"unknown scenario {self.scenario!r}; "
                f"expected one of {', '.join(_SCENARIOS)}")
        if len(self.sizes) == 0 or min(self.sizes) < 2:
            raise StructuralError("sizes must be >= 2")
        if not 1 <= self.num_treated_households <= self.num_households - 1:
            raise StructuralError(
                "num_treated_households must leave at least one treated "
                "and one control household")
        for name in ("control_means", "primary_effects", "spillover_effects"):
            value = getattr(self, name)
            if value is not None and len(value) != len(self.sizes):
                raise StructuralError(
                    f"{name} must have one entry per size option")

    def resolved_params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-size-option (control mean, primary, spillover) arrays."""
        if self.scenario == "constant":
            defaults = [(2.0, 1.5, 0.7)] * len(self.sizes)
        else:
            missing = [s for s in self.sizes if s not in _BY_SIZE_DEFAULTS]
            if missing and (self.control_means is None
                            or self.primary_effects is None
                            or self.spillover_effects is None):
                raise StructuralError(
                    f"no default by-size parameters for sizes {missing}; "
                    "pass control_means/primary_effects/spillover_effects")
            defaults = [_BY_SIZE_DEFAULTS.get(s, (np.nan,) * 3) for s in self.sizes]
        mu = np.array([d[0] for d in defaults]) if self.control_means is None \
            else np.asarray(self.control_means, dtype=np.float64)
        tp = np.array([d[1] for d in defaults]) if self.primary_effects is None \
            else np.asarray(self.primary_effects, dtype=np.float64)
        ts = np.array([d[2] for d in defaults]) if self.spillover_effects is None \
            else np.asarray(self.spillover_effects, dtype=np.float64)
        return mu, tp, ts


def _draw_mixed_table(gen: np.random.Generator, config: SizeBiasStudyConfig,
                      mu: np.ndarray, tp: np.ndarray, ts: np.ndarray):
    n = config.num_households
    options = np.asarray(config.sizes, dtype=np.int64)
    idx = gen.integers(0, len(options), n)
    sizes = options[idx]
    nmax = int(options.max())
    base = gen.normal(mu[idx], config.sigma_between)
    tau_p = gen.normal(tp[idx], config.sigma_between)
    tau_s = gen.normal(ts[idx], config.sigma_between)
    eps = gen.normal(0.0, config.sigma_within, (n, nmax, 3))
    y00 = base[:, None] + eps[:, :, 0]
    y10 = (base + tau_s)[:, None] + eps[:, :, 1]
    y11 = (base + tau_p)[:, None] + eps[:, :, 2]
    return sizes, idx, y11, y10, y00


def run_size_bias_study(config: SizeBiasStudyConfig) -> StudyResult:
    """Run the mixed-size study; one row per estimator and effect.

    Reports the absolute bias (absolute mean deviation from the
    replicate's true individually weighted contrast) and the Monte
    Carlo standard deviation of that deviation for the weighted
    unbiased estimator, the simple difference, and the size
    post-stratified estimator.
    """
    mu, tp, ts = config.resolved_params()
    num_strata = len(config.sizes)
    fixed = None
    if config.fixed_table:
        table_gen = _cell_generator(config.seed, 0, _TABLE_STREAM)
        fixed = _draw_mixed_table(table_gen, config, mu, tp, ts)
    stats = np.empty((config.replications, 9))
    for rep in range(config.replications):
        gen = _cell_generator(config.seed, 0, rep)
        if fixed is None:
            sizes, idx, y11, y10, y00 = _draw_mixed_table(gen, config, mu, tp, ts)
        else:
            sizes, idx, y11, y10, y00 = fixed
        h, member = _draw_assignment_arrays(
            gen, config.num_households, config.num_treated_households, sizes)
        stats[rep] = kernels.iw_replicate_stats(
            y11, y10, y00, sizes, h, member, idx, num_strata)
        if stats[rep, 8] != 0.0:
            raise EstimationError(
                f"replicate {rep}: a size stratum has no treated or no "
                "control household; post-stratification is undefined for "
                "this draw")
    estimators = (("unbiased", 0, 1), ("simple-difference", 2, 3),
                  ("post-stratified", 4, 5))
    columns = ("estimator", "effect", "abs_bias", "mc_sd")
    rows: list[tuple] = []
    for name, col_p, col_s in estimators:
        for effect, col in (("primary", col_p), ("spillover", col_s)):
            true_col = 6 if effect == "primary" else 7
            err = stats[:, col] - stats[:, true_col]
            sd = float(err.std(ddof=1)) if err.shape[0] > 1 else float("nan")
            rows.append((name, effect, float(np.abs(err.mean())), sd))
    meta = {
        "study": "size-bias",
        "backend": kernels.backend,
        "scenario": config.scenario,
        "replications": config.replications,
        "seed": config.seed,
        "fixed_table": config.fixed_table,
        "mean_true_primary": float(stats[:, 6].mean()),
        "mean_true_spillover": float(stats[:, 7].mean()),
    }
    return StudyResult(columns, rows, meta)
