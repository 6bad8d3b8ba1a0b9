"""Numpy implementation of the propagation kernel (fallback for ``_kernels.pyx``)."""
import math

import numpy as np

STATUS_OK = 0
STATUS_LIQUIDITY = 1


def _damping(step, first_round, tau):
    if math.isinf(tau):
        return np.ones(first_round.shape)
    age = step - first_round
    if tau == 0:
        return (age == 0).astype(float)
    return np.exp(-age / tau)


def propagate_kernel(credit, funding, out_strength, total_volume, h1,
                     lgd, rho, tau, max_rounds, eps, threshold):
    """Iterate the distress recurrence.

    ``credit[i, j] = a_ij / E_i`` and ``funding[i, j] = a_ji / E_i``.
    Returns ``(h, gamma, q, first_round, rounds_run, converged, status, fail_round)``
    where ``h`` has ``max_rounds + 1`` rows of which ``rounds_run + 1`` are filled.
    """
    n_mem = h1.shape[0]
    h = np.zeros((max_rounds + 1, n_mem))
    gamma = np.zeros(max(max_rounds - 1, 0))
    q = np.zeros(max(max_rounds - 1, 0))
    first_round = np.full(n_mem, -1, dtype=np.int64)
    h[1] = h1
    first_round[h1 > 0] = 1
    rounds_run = 1
    converged = bool(np.all(h1 >= threshold))
    status, fail_round = STATUS_OK, -1
    n = 0
    while not converged and n + 2 <= max_rounds:
        step = n + 1
        delta = h[n + 1] - h[n]
        active = h[n] < threshold
        spread = np.where(active & (delta != 0), delta, 0.0)
        spread = spread * np.where(spread != 0, _damping(step, first_round, tau), 0.0)
        q_n = float(out_strength @ spread)
        sold = rho * q_n
        if sold == 0:
            g = 0.0
        elif sold >= total_volume:
            status, fail_round = STATUS_LIQUIDITY, n
            break
        else:
            g = sold / (total_volume - sold)
        gamma[n] = g
        q[n] = q_n
        inc = lgd * (credit @ spread) + (rho * g) * (funding @ spread)
        h[n + 2] = np.minimum(1.0, h[n + 1] + inc)
        rounds_run = n + 2
        newly = (first_round < 0) & (h[n + 2] > 0)
        first_round[newly] = n + 2
        if np.max(h[n + 2] - h[n + 1]) < eps or np.all(h[n + 2] >= threshold):
            converged = True
        n += 1
    return h, gamma, q, first_round, rounds_run, converged, status, fail_round
