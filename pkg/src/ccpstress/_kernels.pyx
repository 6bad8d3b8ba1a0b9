# cython: language_level=3
"""Compiled propagation kernel; same contract as ``_pykernels.propagate_kernel``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, isinf

cnp.import_array()

cdef enum:
    STATUS_OK = 0
    STATUS_LIQUIDITY = 1


def propagate_kernel(double[:, ::1] credit, double[:, ::1] funding,
                     double[::1] out_strength, double total_volume, double[::1] h1,
                     double lgd, double rho, double tau, int max_rounds,
                     double eps, double threshold):
    cdef Py_ssize_t n_mem = h1.shape[0]
    cdef Py_ssize_t i, j
    cdef int n = 0, step, rounds_run = 1, status = STATUS_OK, fail_round = -1
    cdef bint converged = True
    cdef double q_n, sold, g, d, damp, acc_c, acc_f, val, max_inc
    cdef bint all_def

    h_arr = np.zeros((max_rounds + 1, n_mem))
    gamma_arr = np.zeros(max(max_rounds - 1, 0))
    q_arr = np.zeros(max(max_rounds - 1, 0))
    first_arr = np.full(n_mem, -1, dtype=np.int64)
    spread_arr = np.zeros(n_mem)
    cdef double[:, ::1] h = h_arr
    cdef double[::1] gamma = gamma_arr
    cdef double[::1] q = q_arr
    cdef long long[::1] first_round = first_arr
    cdef double[::1] spread = spread_arr
    cdef bint inf_tau = isinf(tau)

    for i in range(n_mem):
        h[1, i] = h1[i]
        if h1[i] > 0:
            first_round[i] = 1
        if h1[i] < threshold:
            converged = False

    while not converged and n + 2 <= max_rounds:
        step = n + 1
        q_n = 0.0
        for j in range(n_mem):
            d = h[n + 1, j] - h[n, j]
            if h[n, j] < threshold and d != 0:
                if inf_tau:
                    damp = 1.0
                elif tau == 0:
                    damp = 1.0 if step == first_round[j] else 0.0
                else:
                    damp = exp(-(step - first_round[j]) / tau)
                spread[j] = d * damp
            else:
                spread[j] = 0.0
            q_n += out_strength[j] * spread[j]
        sold = rho * q_n
        if sold == 0:
            g = 0.0
        elif sold >= total_volume:
            status = STATUS_LIQUIDITY
            fail_round = n
            break
        else:
            g = sold / (total_volume - sold)
        gamma[n] = g
        q[n] = q_n
        max_inc = 0.0
        all_def = True
        for i in range(n_mem):
            acc_c = 0.0
            acc_f = 0.0
            for j in range(n_mem):
                acc_c += credit[i, j] * spread[j]
                acc_f += funding[i, j] * spread[j]
            val = h[n + 1, i] + (lgd * acc_c + (rho * g) * acc_f)
            if val > 1.0:
                val = 1.0
            h[n + 2, i] = val
            if val - h[n + 1, i] > max_inc:
                max_inc = val - h[n + 1, i]
            if val < threshold:
                all_def = False
            if first_round[i] < 0 and val > 0:
                first_round[i] = n + 2
        rounds_run = n + 2
        if max_inc < eps or all_def:
            converged = True
        n += 1
    return h_arr, gamma_arr, q_arr, first_arr, rounds_run, bool(converged), status, fail_round
