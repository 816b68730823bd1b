"""Reference (numpy) implementation of the replication kernels.

Both backends implement the same contract and must agree to within
1e-10 on every returned statistic; the compiled backend is selected at
import when available.  Outcome arrays are household-by-member matrices
(padded with unused entries when household sizes vary), ``h`` marks
treated households and ``member`` holds the directly treated member's
column (or -1 for control households).
"""
from __future__ import annotations

import numpy as np

BACKEND = "reference"


def _var_from_sums(total: float, total_sq: float, count: int) -> float:
    mean = total / count
    return (total_sq - count * mean * mean) / (count - 1)


def coverage_replicate_stats(y11: np.ndarray, y10: np.ndarray, y00: np.ndarray,
                             h: np.ndarray, member: np.ndarray) -> np.ndarray:
    """Point estimates, three variance flavors, and true contrasts.

    Equal household sizes.  Returns
    ``[tau_p, tau_s, vp_cluster, vs_cluster, vp_hc2, vs_hc2,
    vp_nominal, vs_nominal, tau_p_true, tau_s_true]`` where the cluster
    flavor is the household-level variance estimator, the hc2 flavor
    treats individuals as independent, and the nominal flavor assumes
    homoskedasticity; with equal sizes these coincide with the matching
    regression covariances.
    """
    num_households, size = y11.shape
    hmask = h.astype(bool)
    treated = np.flatnonzero(hmask)
    control = np.flatnonzero(~hmask)
    n1 = treated.shape[0]
    n0 = control.shape[0]
    t = member[treated]

    direct = y11[treated, t]
    rows10 = y10[treated]
    sum10 = rows10.sum(axis=1) - rows10[np.arange(n1), t]
    spill_mean = sum10 / (size - 1)
    rows00 = y00[control]
    control_mean = rows00.mean(axis=1)

    tau_p = direct.mean() - control_mean.mean()
    tau_s = spill_mean.mean() - control_mean.mean()
    vp_cluster = direct.var(ddof=1) / n1 + control_mean.var(ddof=1) / n0
    vs_cluster = spill_mean.var(ddof=1) / n1 + control_mean.var(ddof=1) / n0

    count10 = n1 * (size - 1)
    count00 = n0 * size
    ssq10 = float((rows10 * rows10).sum() - (rows10[np.arange(n1), t] ** 2).sum())
    total10 = float(sum10.sum())
    var10 = _var_from_sums(total10, ssq10, count10)
    total00 = float(rows00.sum())
    ssq00 = float((rows00 * rows00).sum())
    var00 = _var_from_sums(total00, ssq00, count00)
    var11 = direct.var(ddof=1)

    vp_hc2 = var11 / n1 + var00 / count00
    vs_hc2 = var10 / count10 + var00 / count00

    rss = (var11 * (n1 - 1) + var10 * (count10 - 1) + var00 * (count00 - 1))
    sigma2 = rss / (num_households * size - 3)
    vp_nominal = sigma2 * (1.0 / n1 + 1.0 / count00)
    vs_nominal = sigma2 * (1.0 / count10 + 1.0 / count00)

    tau_p_true = y11.mean() - y00.mean()
    tau_s_true = y10.mean() - y00.mean()
    return np.array([tau_p, tau_s, vp_cluster, vs_cluster, vp_hc2, vs_hc2,
                     vp_nominal, vs_nominal, tau_p_true, tau_s_true])


def iw_replicate_stats(y11: np.ndarray, y10: np.ndarray, y00: np.ndarray,
                       sizes: np.ndarray, h: np.ndarray, member: np.ndarray,
                       strata: np.ndarray, num_strata: int) -> np.ndarray:
    """Individually weighted estimators under varying household sizes.

    Returns ``[tau_p_unb, tau_s_unb, tau_p_sd, tau_s_sd, tau_p_ps,
    tau_s_ps, tau_p_true, tau_s_true, degenerate]``: the unbiased
    weighted estimator, the simple difference, and the size
    post-stratified estimator, plus the replicate's true individually
    weighted contrasts.  ``degenerate`` is 1.0 (and the post-stratified
    entries are nan) when some stratum has no treated or no control
    household.  Padded columns (``j >= sizes[i]``) are ignored.
    """
    num_households = sizes.shape[0]
    nmax = y11.shape[1]
    mask = np.arange(nmax)[None, :] < sizes[:, None]
    hmask = h.astype(bool)
    treated = np.flatnonzero(hmask)
    control = np.flatnonzero(~hmask)
    n1 = treated.shape[0]
    n0 = control.shape[0]
    nplus = float(sizes.sum())

    t = member[treated]
    sizes_t = sizes[treated].astype(np.float64)
    direct = y11[treated, t]
    sum10 = (np.where(mask, y10, 0.0)[treated]).sum(axis=1) - y10[treated, t]
    sum00 = (np.where(mask, y00, 0.0)[control]).sum(axis=1)
    sizes_c = sizes[control].astype(np.float64)

    scale = num_households / nplus
    tau_p_unb = scale * ((sizes_t * direct).sum() / n1 - sum00.sum() / n0)
    tau_s_unb = scale * ((sizes_t * sum10 / (sizes_t - 1.0)).sum() / n1
                         - sum00.sum() / n0)

    pooled00 = sum00.sum() / sizes_c.sum()
    tau_p_sd = direct.mean() - pooled00
    tau_s_sd = sum10.sum() / (sizes_t - 1.0).sum() - pooled00

    count_all = np.bincount(strata, minlength=num_strata).astype(np.float64)
    count_t = np.bincount(strata[treated], minlength=num_strata).astype(np.float64)
    count_c = count_all - count_t
    a = np.bincount(strata[treated], weights=sizes_t * direct,
                    minlength=num_strata)
    b = np.bincount(strata[treated], weights=sizes_t * sum10 / (sizes_t - 1.0),
                    minlength=num_strata)
    c = np.bincount(strata[control], weights=sum00, minlength=num_strata)
    occupied = count_all > 0
    degenerate = bool(((count_t == 0) | (count_c == 0))[occupied].any())
    if degenerate:
        tau_p_ps = tau_s_ps = np.nan
    else:
        # unoccupied strata have count_all == 0 and contribute nothing;
        # the maximum() only guards their divisions
        per_p = count_all * (a / np.maximum(count_t, 1.0)
                             - c / np.maximum(count_c, 1.0))
        per_s = count_all * (b / np.maximum(count_t, 1.0)
                             - c / np.maximum(count_c, 1.0))
        tau_p_ps = per_p.sum() / nplus
        tau_s_ps = per_s.sum() / nplus

    d11 = np.where(mask, y11 - y00, 0.0).sum()
    d10 = np.where(mask, y10 - y00, 0.0).sum()
    tau_p_true = d11 / nplus
    tau_s_true = d10 / nplus
    return np.array([tau_p_unb, tau_s_unb, tau_p_sd, tau_s_sd, tau_p_ps,
                     tau_s_ps, tau_p_true, tau_s_true, float(degenerate)])
