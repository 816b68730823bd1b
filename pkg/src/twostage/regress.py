"""Regression formulations of the design-based estimators.

Two routes lead back to the weighted estimators:

* Household-aggregate regression: collapse each treated household to
  two rows (the directly treated member's outcome and the mean over the
  untreated members) and each control household to one row (its mean),
  then regress on cell dummies.  On transformed outcomes the
  coefficients reproduce the inverse-probability weighted point
  estimates for any household sizes, and the HC2 variance of the cell
  coefficients reproduces the household-level variance estimator.

* Individual-level regression on cell dummies with household-clustered
  HC2 standard errors.  With equal household sizes this is numerically
  identical to the aggregate route; with varying sizes the coefficients
  are the (biased) simple-difference contrasts, which is the reason the
  aggregate route exists.

The unclustered and homoskedastic variants of the individual regression
are also provided; they are what naive analyses report and what the
coverage simulations compare against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, StructuralError
from .estimate import household_cell_stats
from .model import (
    EffectEstimate,
    EffectKind,
    EstimatorFamily,
    ObservedData,
    WeightScheme,
)
from .variance import confidence_interval

__all__ = [
    "RegressionResult",
    "individual_regression",
    "aggregate_regression",
    "overall_regression",
]


@dataclass(frozen=True)
class RegressionResult:
    """Coefficients and covariance from one regression fit."""

    coef_names: tuple[str, ...]
    coefficients: np.ndarray
    vcov: np.ndarray
    num_obs: int
    scheme: str
    vcov_kind: str

    def _index(self, name: str) -> int:
        try:
            return self.coef_names.index(name)
        except ValueError:
            raise StructuralError(
                f"regression has no {name!r} coefficient "
                f"(available: {', '.join(self.coef_names)})")

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self._index(name)])

    def variance(self, name: str) -> float:
        i = self._index(name)
        return float(self.vcov[i, i])

    def effect_estimate(self, effect: EffectKind,
                        ci_level: float | None = None) -> EffectEstimate:
        point = self.coefficient(effect.value)
        var = self.variance(effect.value)
        interval = None
        if ci_level is not None:
            interval = confidence_interval(point, var, ci_level)
        return EffectEstimate(effect, self.scheme, EstimatorFamily.REGRESSION,
                              point, var, ci_level, interval)


def _ols(x: np.ndarray, y: np.ndarray):
    xtx = x.T @ x
    try:
        xtx_inv = np.linalg.inv(xtx)
    except np.linalg.LinAlgError:
        raise EstimationError(
            "regression design matrix is singular (an observational cell "
            "is empty)")
    beta = xtx_inv @ (x.T @ y)
    return beta, y - x @ beta, xtx_inv


def _hc2_vcov(x: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray) -> np.ndarray:
    leverage = np.einsum("ij,jk,ik->i", x, xtx_inv, x)
    if (leverage >= 1.0 - 1e-12).any():
        raise EstimationError(
            "an observation has leverage one (a cell with a single "
            "observation); HC2 weighting is undefined")
    w = resid * resid / (1.0 - leverage)
    return xtx_inv @ ((x * w[:, None]).T @ x) @ xtx_inv


def _nominal_vcov(x: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray) -> np.ndarray:
    dof = x.shape[0] - x.shape[1]
    if dof <= 0:
        raise EstimationError("no residual degrees of freedom")
    return float(resid @ resid) / dof * xtx_inv


def _inv_sqrt_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() <= 1e-10:
        raise EstimationError(
            "a household spans an entire regression cell; the clustered "
            "HC2 adjustment is undefined")
    return (vecs / np.sqrt(vals)) @ vecs.T


def _cluster_hc2_vcov(x: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray,
                      clusters: np.ndarray) -> np.ndarray:
    k = x.shape[1]
    meat = np.zeros((k, k))
    for c in np.unique(clusters):
        idx = np.flatnonzero(clusters == c)
        xs = x[idx]
        p = xs @ xtx_inv @ xs.T
        u = _inv_sqrt_psd(np.eye(len(idx)) - p) @ resid[idx]
        xu = xs.T @ u
        meat += np.outer(xu, xu)
    return xtx_inv @ meat @ xtx_inv


def individual_regression(data: ObservedData, *,
                          vcov: str = "cluster") -> RegressionResult:
    """Regress individual outcomes on cell dummies.

    Parameters
    ----------
    vcov : {"cluster", "hc2", "nominal"}
        ``"cluster"`` applies the household-clustered HC2 correction
        (each household's residual vector is rescaled by the inverse
        square root of its hat-matrix block); ``"hc2"`` applies the
        per-observation leverage correction while ignoring households;
        ``"nominal"`` is the homoskedastic covariance.

    Notes
    -----
    The coefficients equal the pooled cell-mean contrasts of the
    simple-difference estimator.  With equal household sizes both
    coefficients and (for ``"cluster"``) their variances match the
    weighted estimator and its household-level variance exactly.
    """
    y = data.outcome
    h = data.household_treated.astype(np.float64)
    z = data.individual_treated.astype(np.float64)
    x = np.column_stack([np.ones(len(y)), h * z, h * (1.0 - z)])
    beta, resid, xtx_inv = _ols(x, y)
    if vcov == "cluster":
        cov = _cluster_hc2_vcov(x, resid, xtx_inv, data.household)
    elif vcov == "hc2":
        cov = _hc2_vcov(x, resid, xtx_inv)
    elif vcov == "nominal":
        cov = _nominal_vcov(x, resid, xtx_inv)
    else:
        raise StructuralError(
            f"unknown vcov {vcov!r}; expected cluster, hc2, or nominal")
    return RegressionResult(("intercept", "primary", "spillover"), beta, cov,
                            len(y), "iw", vcov)


def _aggregate_fit(rows: np.ndarray, dummies: np.ndarray, scheme_label: str,
                   names: tuple[str, ...]) -> RegressionResult:
    x = np.column_stack([np.ones(len(rows)), dummies])
    beta, resid, xtx_inv = _ols(x, rows)
    cov = _hc2_vcov(x, resid, xtx_inv)
    return RegressionResult(names, beta, cov, len(rows), scheme_label, "hc2")


def aggregate_regression(data: ObservedData,
                         scheme: WeightScheme | None = None) -> RegressionResult:
    """Regress household cell aggregates on cell dummies with HC2.

    Each treated household contributes two rows (directly treated
    member, mean of untreated members); each control household one row
    (household mean).  Outcomes are transformed by the scheme first
    (household weighting, the default, leaves them untouched); the
    design matrix itself is never weighted.  Coefficients equal the
    weighted point estimates and the HC2 variances of the two cell
    coefficients equal the household-level variance estimates, for any
    household sizes.
    """
    if scheme is None:
        scheme = WeightScheme.household()
    stats = household_cell_stats(data, scheme)
    n1 = stats.treated.shape[0]
    n0 = stats.control.shape[0]
    rows = np.concatenate([stats.direct, stats.spill_mean, stats.control_mean])
    dummies = np.zeros((n1 + n1 + n0, 2))
    dummies[:n1, 0] = 1.0
    dummies[n1:2 * n1, 1] = 1.0
    return _aggregate_fit(rows, dummies, scheme.label,
                          ("intercept", "primary", "spillover"))


def overall_regression(data: ObservedData,
                       scheme: WeightScheme | None = None) -> RegressionResult:
    """Two-cell aggregate regression for the overall effect.

    Treated households contribute their whole-household mean of
    transformed observed outcomes; the treatment dummy's coefficient is
    the weighted overall-effect estimate and its HC2 variance matches
    the household-level variance estimator.
    """
    if scheme is None:
        scheme = WeightScheme.household()
    stats = household_cell_stats(data, scheme)
    rows = np.concatenate([stats.whole_mean, stats.control_mean])
    dummies = np.zeros((rows.shape[0], 1))
    dummies[:stats.treated.shape[0], 0] = 1.0
    return _aggregate_fit(rows, dummies, scheme.label, ("intercept", "overall"))
