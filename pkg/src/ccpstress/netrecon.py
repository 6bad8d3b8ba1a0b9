"""Fitness-model reconstruction of the inter-member exposure network.

Links are drawn independently with probability ``z A_i L_j / (1 + z A_i L_j)``
from the interbank marginals; a present link carries weight
``(1/z + A_i L_j) / C`` so that expected weights equal ``A_i L_j / C``.
Self-links are excluded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import UnreachableDensityError
from .market import MarketSnapshot
from .rng import as_generator

DEFAULT_DENSITY = 0.05
CALIBRATION_RTOL = 1e-9
_LOG_BRACKET = (math.log(1e-18), math.log(1e18))


@dataclass(frozen=True)
class ExposureNetwork:
    """Directed loan matrix; ``weights[i, j]`` is the amount lent by i to j."""

    weights: np.ndarray
    z: float
    total_volume: float

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def density(self) -> float:
        n = self.n
        return float(np.count_nonzero(self.weights)) / (n * (n - 1))

    def out_strength(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def in_strength(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        src, dst = np.nonzero(self.weights)
        for i, j in zip(src.tolist(), dst.tolist()):
            yield i, j, float(self.weights[i, j])


def link_probability(z, a_int_i, l_int_j):
    """Probability of a link from a lender with ``a_int_i`` to a borrower with ``l_int_j``.

    Vectorizes over numpy inputs. ``z = inf`` gives 1 wherever both marginals
    are positive.
    """
    prod = np.multiply(a_int_i, l_int_j, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        x = np.multiply(z, prod, dtype=float)
        p = np.where(np.isinf(x), 1.0, x / (1.0 + x))
    p = np.where(prod > 0, p, 0.0)
    return float(p) if np.ndim(p) == 0 else p


def probability_matrix(z: float, a_int: np.ndarray, l_int: np.ndarray) -> np.ndarray:
    p = link_probability(z, a_int[:, None], l_int[None, :])
    np.fill_diagonal(p, 0.0)
    return p


def _scaled_marginals(a_int, l_int):
    c = float(a_int.sum())
    if not c > 0:
        raise UnreachableDensityError("total interbank volume is zero")
    return a_int / c, l_int / c, c


def expected_density(snapshot: MarketSnapshot, z: float) -> float:
    a, l = snapshot.interbank_assets, snapshot.interbank_liabilities
    n = len(a)
    return float(probability_matrix(z, a, l).sum()) / (n * (n - 1))


def max_density(snapshot: MarketSnapshot) -> float:
    """Supremum of the expected density as z grows without bound."""
    a, l = snapshot.interbank_assets, snapshot.interbank_liabilities
    n = len(a)
    feasible = np.outer(a > 0, l > 0)
    np.fill_diagonal(feasible, False)
    return float(feasible.sum()) / (n * (n - 1))


def calibrate_z(snapshot: MarketSnapshot, target_density: float = DEFAULT_DENSITY) -> float:
    """Find z whose expected link density equals ``target_density``.

    Bisection on log z in units where the marginals are normalized by the
    total interbank volume, so the bracket does not depend on the currency.
    """
    if not 0 < target_density < 1:
        raise ValueError("target_density must lie in (0, 1)")
    a_raw, l_raw = snapshot.interbank_assets, snapshot.interbank_liabilities
    n = len(a_raw)
    if n < 2:
        raise UnreachableDensityError("need at least two members")
    sup = max_density(snapshot)
    if target_density >= sup:
        raise UnreachableDensityError(
            f"target density {target_density:g} not below the attainable supremum {sup:g}"
        )
    a, l, c = _scaled_marginals(a_raw, l_raw)
    prod = np.outer(a, l)
    np.fill_diagonal(prod, 0.0)
    prod = prod[prod > 0]
    target = target_density * n * (n - 1)

    def excess(log_u):
        x = math.exp(log_u) * prod
        return float((x / (1.0 + x)).sum()) - target

    lo, hi = _LOG_BRACKET
    while excess(lo) > 0:
        lo -= 20.0
    while excess(hi) < 0:
        hi += 20.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        f = excess(mid)
        if abs(f) <= CALIBRATION_RTOL * 0.1 * target:
            break
        if f < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(mid) / (c * c)


class NetworkSampler:
    """Precomputed link probabilities and weights for repeated draws."""

    def __init__(self, snapshot: MarketSnapshot, z: float):
        a, l = snapshot.interbank_assets, snapshot.interbank_liabilities
        self.z = float(z)
        self.total_volume = snapshot.interbank_volume
        self.p = probability_matrix(z, a, l)
        self.w = (1.0 / self.z + np.outer(a, l)) / self.total_volume

    def sample(self, rng) -> ExposureNetwork:
        rng = as_generator(rng)
        u = rng.random(self.p.shape)
        weights = np.where(u < self.p, self.w, 0.0)
        return ExposureNetwork(weights, self.z, self.total_volume)

    def expected_weights(self) -> np.ndarray:
        return self.p * self.w


def sample_network(snapshot: MarketSnapshot, z: float, rng_seed) -> ExposureNetwork:
    """Draw one network realization. ``rng_seed`` is an int or a numpy Generator."""
    return NetworkSampler(snapshot, z).sample(rng_seed)
