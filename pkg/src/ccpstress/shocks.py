"""Round-one distress: distributed exogenous + margin shocks, or cover-2 defaults."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .market import MarketSnapshot
from .rng import as_generator

SCENARIOS = ("distributed", "cover2")


@dataclass(frozen=True)
class ShockConfig:
    x: float = 1e-3
    phi: float = 0.5
    scenario: str = "distributed"
    rng_seed: int = 0

    def __post_init__(self):
        if not self.x >= 0:
            raise ValueError("x must be >= 0")
        if not 0 <= self.phi <= 1:
            raise ValueError("phi must lie in [0, 1]")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")


@dataclass(frozen=True)
class ShockVector:
    """Equity losses ``S`` and the implied initial distress ``h1 = S / E``.

    ``exogenous`` holds the unclamped first (asset-shock) term per member;
    ``selected`` the indices of the cover-2 pair when applicable. Members
    with nonpositive equity enter already defaulted (``h1 = 1``).
    """

    losses: np.ndarray
    initial_distress: np.ndarray
    exogenous: Optional[np.ndarray] = None
    selected: tuple[int, ...] = field(default=())

    def aggregate_loss_fraction(self, snapshot: MarketSnapshot) -> float:
        return float(self.losses.sum() / snapshot.equity[snapshot.equity > 0].sum())


def _distress(losses, equity):
    h = np.ones_like(equity)
    live = equity > 0
    h[live] = losses[live] / equity[live]
    return np.clip(h, 0.0, 1.0)


def shock_scale(snapshot: MarketSnapshot, x: float) -> float:
    """Equity-relative shock magnitude ``x * sum(A) / sum(E)``."""
    return x * snapshot.assets.sum() / snapshot.equity.sum()


def distributed_shock(snapshot: MarketSnapshot, config: ShockConfig, rng=None) -> ShockVector:
    """Poisson-mixed exogenous shock plus the stressed-margin term.

    ``rng`` defaults to a stream seeded by ``config.rng_seed``.
    """
    eq = snapshot.equity
    total_eq = eq.sum()
    if not total_eq > 0:
        raise ValueError("total equity must be positive")
    rng = as_generator(config.rng_seed if rng is None else rng)
    xi = rng.poisson(1.0, size=len(eq)).astype(float)
    chi = shock_scale(snapshot, config.x)
    exogenous = (config.phi * xi + (1.0 - config.phi)) * chi * eq
    margin_gap = np.maximum(snapshot.margin_stressed - snapshot.margin_ordinary, 0.0)
    losses = exogenous + (eq / total_eq) * margin_gap
    # clamp negatives (redundant for valid inputs) and cap at equity so h1 <= 1
    losses = np.minimum(np.maximum(losses, 0.0), np.maximum(eq, 0.0))
    return ShockVector(losses, _distress(losses, eq), exogenous)


def cover2_pair(snapshot: MarketSnapshot) -> tuple[int, int]:
    """Indices of the two largest uncovered exposures, ties broken by member id."""
    if len(snapshot) < 2:
        raise ValueError("cover-2 needs at least two members")
    ue = snapshot.uncovered_exposure
    order = sorted(range(len(ue)), key=lambda k: (-ue[k], snapshot.ids[k]))
    return order[0], order[1]


def cover2_shock(snapshot: MarketSnapshot) -> ShockVector:
    pair = cover2_pair(snapshot)
    eq = snapshot.equity
    losses = np.zeros_like(eq)
    idx = list(pair)
    losses[idx] = np.maximum(eq[idx], 0.0)
    h = _distress(losses, eq)
    h[idx] = 1.0
    return ShockVector(losses, h, None, pair)


def make_shock(snapshot: MarketSnapshot, config: ShockConfig, rng=None) -> ShockVector:
    if config.scenario == "cover2":
        return cover2_shock(snapshot)
    return distributed_shock(snapshot, config, rng)
