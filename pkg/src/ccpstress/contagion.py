"""Credit and liquidity distress propagation on the exposure network.

The hot loop lives in a compiled kernel (``_kernels``) when it has been
built; otherwise the numpy implementation in ``_pykernels`` is used. Set
``CCPSTRESS_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _pykernels
from .errors import LiquidityExhaustionError, SingularEquityError
from .market import MarketSnapshot
from .netrecon import ExposureNetwork
from .shocks import ShockVector

try:
    if os.environ.get("CCPSTRESS_BACKEND", "").lower() == "python":
        raise ImportError("python backend requested")
    from ._kernels import propagate_kernel as _compiled_kernel
except ImportError:
    _compiled_kernel = None

KERNELS = {"python": _pykernels.propagate_kernel}
if _compiled_kernel is not None:
    KERNELS["cython"] = _compiled_kernel
BACKEND = "cython" if _compiled_kernel is not None else "python"

DEFAULT_THRESHOLD = 1.0 - 1e-9


@dataclass(frozen=True)
class ContagionParams:
    lgd: float = 0.6
    rho: float = 0.6
    tau: float = math.inf
    max_rounds: int = 10
    convergence_eps: float = 1e-10
    default_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 0 <= self.lgd <= 1:
            raise ValueError("lgd must lie in [0, 1]")
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if not self.tau >= 0:
            raise ValueError("tau must be >= 0")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass(frozen=True)
class ContagionTrajectory:
    """Full distress history.

    ``h[n]`` is the distress vector after round ``n`` (``h[0]`` is zero).
    ``gamma_series[n]`` and ``q_series[n]`` drive the update producing
    ``h[n + 2]``. ``first_distress_round`` is -1 for never-distressed members.
    """

    h: np.ndarray
    first_distress_round: np.ndarray
    gamma_series: np.ndarray
    q_series: np.ndarray
    rounds_run: int
    converged: bool
    default_threshold: float = DEFAULT_THRESHOLD

    def h_at(self, n: int) -> np.ndarray:
        """Distress at round ``n``; rounds past the stop are the stationary state."""
        if n < 0:
            raise ValueError("round must be >= 0")
        return self.h[min(n, self.rounds_run)]

    @property
    def final(self) -> np.ndarray:
        return self.h[self.rounds_run]

    def defaulted_at(self, n: int) -> np.ndarray:
        return self.h_at(n) >= self.default_threshold


def _scaled_rows(weights, equities, defaulted):
    """Return ``weights / equities[:, None]``, zeroing rows of pre-defaulted members."""
    eq = np.asarray(equities, dtype=float)
    dead = eq <= 0
    if np.any(dead):
        touched = (weights.sum(axis=1) > 0) | (weights.sum(axis=0) > 0)
        bad = dead & touched
        if defaulted is not None:
            bad &= ~np.asarray(defaulted, dtype=bool)
        if np.any(bad):
            raise SingularEquityError(
                f"members {np.flatnonzero(bad).tolist()} have zero equity but live exposures"
            )
    safe = np.where(dead, 1.0, eq)
    out = weights / safe[:, None]
    out[dead] = 0.0
    return out


def impact_matrix(network: ExposureNetwork, equities, params: ContagionParams, gamma: float,
                  defaulted=None) -> np.ndarray:
    """Entry ``[j, i]`` is the impact of i on j: ``(lgd a_ji + rho gamma a_ij) / E_j``."""
    a = network.weights
    return params.lgd * _scaled_rows(a, equities, defaulted) + (
        params.rho * gamma
    ) * _scaled_rows(np.ascontiguousarray(a.T), equities, defaulted)


def fire_sale_factor(network: ExposureNetwork, rho: float, q: float) -> float:
    sold = rho * q
    if sold == 0:
        return 0.0
    if sold >= network.total_volume:
        raise LiquidityExhaustionError(
            f"fire-sale volume {sold:.6g} reaches total interbank volume {network.total_volume:.6g}"
        )
    return sold / (network.total_volume - sold)


def propagate(network: ExposureNetwork, snapshot: MarketSnapshot, initial: ShockVector,
              params: ContagionParams, backend: Optional[str] = None) -> ContagionTrajectory:
    """Run the distress dynamics from ``initial.initial_distress`` to a stop."""
    h1 = np.ascontiguousarray(initial.initial_distress, dtype=float)
    defaulted = h1 >= params.default_threshold
    a = network.weights
    credit = np.ascontiguousarray(_scaled_rows(a, snapshot.equity, defaulted))
    funding = np.ascontiguousarray(_scaled_rows(np.ascontiguousarray(a.T), snapshot.equity, defaulted))
    out_strength = np.ascontiguousarray(a.sum(axis=1))
    kernel = KERNELS[backend or BACKEND]
    h, gamma, q, first, rounds_run, converged, status, fail_round = kernel(
        credit, funding, out_strength, float(network.total_volume), h1,
        float(params.lgd), float(params.rho), float(params.tau), int(params.max_rounds),
        float(params.convergence_eps), float(params.default_threshold),
    )
    if status != _pykernels.STATUS_OK:
        raise LiquidityExhaustionError(
            f"fire-sale volume reached total interbank volume at round n={fail_round}",
            round_index=fail_round,
        )
    steps = max(rounds_run - 1, 0)
    return ContagionTrajectory(
        h=np.asarray(h)[: rounds_run + 1].copy(),
        first_distress_round=np.asarray(first),
        gamma_series=np.asarray(gamma)[:steps].copy(),
        q_series=np.asarray(q)[:steps].copy(),
        rounds_run=int(rounds_run),
        converged=bool(converged),
        default_threshold=params.default_threshold,
    )
