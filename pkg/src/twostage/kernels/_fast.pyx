# cython: language_level=3
"""Compiled implementation of the replication kernels.

Same contract as the reference backend (see ``_ref.py``); single pass
over the outcome matrices with scalar accumulators.
"""
import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def coverage_replicate_stats(const double[:, ::1] y11, const double[:, ::1] y10,
                             const double[:, ::1] y00, const cnp.uint8_t[::1] h,
                             const cnp.int64_t[::1] member):
    cdef Py_ssize_t num_households = y11.shape[0]
    cdef Py_ssize_t size = y11.shape[1]
    cdef Py_ssize_t i, j, t
    cdef Py_ssize_t n1 = 0, n0 = 0
    cdef double d, m00, v
    cdef double sum11 = 0.0, ssq11 = 0.0
    cdef double sum_m10 = 0.0, ssq_m10 = 0.0
    cdef double sum10 = 0.0, ssq10 = 0.0
    cdef double sum_m00 = 0.0, ssq_m00 = 0.0
    cdef double sum00 = 0.0, ssq00 = 0.0
    cdef double tot11 = 0.0, tot10 = 0.0, tot00 = 0.0
    cdef double row10, row00

    for i in range(num_households):
        for j in range(size):
            tot11 += y11[i, j]
            tot10 += y10[i, j]
            tot00 += y00[i, j]
        if h[i]:
            n1 += 1
            t = member[i]
            d = y11[i, t]
            sum11 += d
            ssq11 += d * d
            row10 = 0.0
            for j in range(size):
                if j != t:
                    v = y10[i, j]
                    row10 += v
                    ssq10 += v * v
            sum10 += row10
            row10 /= size - 1
            sum_m10 += row10
            ssq_m10 += row10 * row10
        else:
            n0 += 1
            row00 = 0.0
            for j in range(size):
                v = y00[i, j]
                row00 += v
                ssq00 += v * v
            sum00 += row00
            m00 = row00 / size
            sum_m00 += m00
            ssq_m00 += m00 * m00

    cdef double count10 = n1 * (size - 1)
    cdef double count00 = n0 * size
    cdef double mean11 = sum11 / n1
    cdef double mean_m10 = sum_m10 / n1
    cdef double mean_m00 = sum_m00 / n0
    cdef double mean10 = sum10 / count10
    cdef double mean00 = sum00 / count00

    cdef double var11 = (ssq11 - n1 * mean11 * mean11) / (n1 - 1)
    cdef double var_m10 = (ssq_m10 - n1 * mean_m10 * mean_m10) / (n1 - 1)
    cdef double var_m00 = (ssq_m00 - n0 * mean_m00 * mean_m00) / (n0 - 1)
    cdef double var10 = (ssq10 - count10 * mean10 * mean10) / (count10 - 1)
    cdef double var00 = (ssq00 - count00 * mean00 * mean00) / (count00 - 1)

    cdef double tau_p = mean11 - mean_m00
    cdef double tau_s = mean_m10 - mean_m00
    cdef double vp_cluster = var11 / n1 + var_m00 / n0
    cdef double vs_cluster = var_m10 / n1 + var_m00 / n0
    cdef double vp_hc2 = var11 / n1 + var00 / count00
    cdef double vs_hc2 = var10 / count10 + var00 / count00

    cdef double rss = (var11 * (n1 - 1) + var10 * (count10 - 1)
                       + var00 * (count00 - 1))
    cdef double sigma2 = rss / (num_households * size - 3)
    cdef double vp_nominal = sigma2 * (1.0 / n1 + 1.0 / count00)
    cdef double vs_nominal = sigma2 * (1.0 / count10 + 1.0 / count00)

    cdef double total = num_households * size
    out = np.empty(10, dtype=np.float64)
    cdef double[::1] o = out
    o[0] = tau_p
    o[1] = tau_s
    o[2] = vp_cluster
    o[3] = vs_cluster
    o[4] = vp_hc2
    o[5] = vs_hc2
    o[6] = vp_nominal
    o[7] = vs_nominal
    o[8] = (tot11 - tot00) / total
    o[9] = (tot10 - tot00) / total
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def iw_replicate_stats(const double[:, ::1] y11, const double[:, ::1] y10,
                       const double[:, ::1] y00, const cnp.int64_t[::1] sizes,
                       const cnp.uint8_t[::1] h, const cnp.int64_t[::1] member,
                       const cnp.int64_t[::1] strata, Py_ssize_t num_strata):
    cdef Py_ssize_t num_households = sizes.shape[0]
    cdef Py_ssize_t i, j, t, k, n
    cdef Py_ssize_t n1 = 0, n0 = 0
    cdef double nplus = 0.0
    cdef double d, row10, row00, sz
    cdef double sum_t_p = 0.0       # sum over treated of n_i * direct
    cdef double sum_t_s = 0.0       # sum over treated of n_i * spill_sum / (n_i - 1)
    cdef double sum_c = 0.0         # sum over control of household sum of y00
    cdef double sum_direct = 0.0
    cdef double sum10_pool = 0.0, count10_pool = 0.0
    cdef double sizes_c_total = 0.0
    cdef double d11 = 0.0, d10 = 0.0

    count_all = np.zeros(num_strata, dtype=np.float64)
    count_t = np.zeros(num_strata, dtype=np.float64)
    acc_a = np.zeros(num_strata, dtype=np.float64)
    acc_b = np.zeros(num_strata, dtype=np.float64)
    acc_c = np.zeros(num_strata, dtype=np.float64)
    cdef double[::1] v_all = count_all
    cdef double[::1] v_t = count_t
    cdef double[::1] v_a = acc_a
    cdef double[::1] v_b = acc_b
    cdef double[::1] v_c = acc_c

    for i in range(num_households):
        n = sizes[i]
        sz = n
        nplus += sz
        k = strata[i]
        v_all[k] += 1.0
        for j in range(n):
            d11 += y11[i, j] - y00[i, j]
            d10 += y10[i, j] - y00[i, j]
        if h[i]:
            n1 += 1
            v_t[k] += 1.0
            t = member[i]
            d = y11[i, t]
            sum_direct += d
            sum_t_p += sz * d
            v_a[k] += sz * d
            row10 = 0.0
            for j in range(n):
                if j != t:
                    row10 += y10[i, j]
            sum10_pool += row10
            count10_pool += sz - 1.0
            sum_t_s += sz * row10 / (sz - 1.0)
            v_b[k] += sz * row10 / (sz - 1.0)
        else:
            n0 += 1
            sizes_c_total += sz
            row00 = 0.0
            for j in range(n):
                row00 += y00[i, j]
            sum_c += row00
            v_c[k] += row00

    cdef double scale = num_households / nplus
    cdef double tau_p_unb = scale * (sum_t_p / n1 - sum_c / n0)
    cdef double tau_s_unb = scale * (sum_t_s / n1 - sum_c / n0)
    cdef double pooled00 = sum_c / sizes_c_total
    cdef double tau_p_sd = sum_direct / n1 - pooled00
    cdef double tau_s_sd = sum10_pool / count10_pool - pooled00

    cdef bint degenerate = False
    cdef double per_p = 0.0, per_s = 0.0, ct, cc
    for k in range(num_strata):
        if v_all[k] == 0.0:
            continue
        ct = v_t[k]
        cc = v_all[k] - ct
        if ct == 0.0 or cc == 0.0:
            degenerate = True
            break
        per_p += v_all[k] * (v_a[k] / ct - v_c[k] / cc)
        per_s += v_all[k] * (v_b[k] / ct - v_c[k] / cc)

    out = np.empty(9, dtype=np.float64)
    cdef double[::1] o = out
    o[0] = tau_p_unb
    o[1] = tau_s_unb
    o[2] = tau_p_sd
    o[3] = tau_s_sd
    if degenerate:
        o[4] = np.nan
        o[5] = np.nan
        o[8] = 1.0
    else:
        o[4] = per_p / nplus
        o[5] = per_s / nplus
        o[8] = 0.0
    o[6] = d11 / nplus
    o[7] = d10 / nplus
    return out
