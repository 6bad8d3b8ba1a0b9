"""Synthetic clearing markets standing in for confidential member data."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date as Date
from typing import NamedTuple, Optional

import numpy as np

from .balance_sheet import EquityObservation, equity_vol_from_assets, price_doc_call
from .market import ClearingMember, MarketSnapshot
from .rng import as_generator


@dataclass(frozen=True)
class SyntheticMarketSpec:
    n_members: int = 100
    aggregate_leverage_target: float = 26.0
    interbank_fraction_range: tuple[float, float] = (0.0, 0.3)
    margin_uplift_range: tuple[float, float] = (1.0, 1.5)
    cover_basis: int = 4
    rng_seed: int = 0
    # currency units per typical member (e.g. EUR millions)
    asset_scale: float = 1e4
    size_sigma: float = 1.0
    member_leverage_range: tuple[float, float] = (10.0, 45.0)
    margin_ratio_range: tuple[float, float] = (0.02, 0.10)
    uncovered_ratio_range: tuple[float, float] = (0.05, 0.6)
    asset_vol_range: tuple[float, float] = (0.02, 0.06)
    asset_drift_range: tuple[float, float] = (0.0, 0.02)
    risk_free_rate: float = 0.01
    maturity_years: float = 1.0
    # if set, the two largest uncovered exposures go to a pair of large
    # interbank borrowers whose joint equity share is close to this value
    cover2_equity_share: Optional[float] = None
    date: Optional[Date] = field(default=Date(2016, 9, 30))

    def __post_init__(self):
        if self.n_members < 3:
            raise ValueError("n_members must be >= 3")
        if not self.aggregate_leverage_target > 1:
            raise ValueError("aggregate_leverage_target must be > 1")
        lo, hi = self.interbank_fraction_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError("interbank_fraction_range must be a sub-interval of [0, 1]")
        if self.cover_basis < 1:
            raise ValueError("cover_basis must be >= 1")


class SyntheticMarket(NamedTuple):
    snapshot: MarketSnapshot
    observations: list[EquityObservation]
    interbank_asset_fraction: np.ndarray
    interbank_liability_fraction: np.ndarray
    asset_vol: np.ndarray


def default_fund_cover(uncovered: np.ndarray, cover_basis: int) -> float:
    """Default fund sized to the ``cover_basis`` largest uncovered exposures."""
    ue = np.sort(np.asarray(uncovered, dtype=float))[::-1]
    return float(ue[:cover_basis].sum())


def _assign_cover2_pair(uncovered, share, target, weight):
    """Move the two largest exposures onto a pair with joint equity share near ``target``.

    Among pairs within 10% of the target the one with the largest ``weight``
    sum is chosen; otherwise the nearest pair.
    """
    joint = share[:, None] + share[None, :]
    gap = np.abs(joint - target)
    np.fill_diagonal(gap, np.inf)
    ok = gap <= 0.1 * target
    if ok.any():
        score = np.where(ok, weight[:, None] + weight[None, :], -np.inf)
        i, j = np.unravel_index(np.argmax(score), score.shape)
    else:
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
    out = uncovered.copy()
    top = np.argsort(-uncovered, kind="stable")[:2]
    for dst, src in zip((i, j), top):
        # swap values so the multiset of exposures (and the fund) is unchanged
        src_now = int(np.flatnonzero(out == uncovered[src])[0])
        out[dst], out[src_now] = out[src_now], out[dst]
    return out


def generate_synthetic_market(spec: SyntheticMarketSpec) -> SyntheticMarket:
    rng = as_generator(spec.rng_seed)
    n = spec.n_members
    ids = [f"CM{k:03d}" for k in range(n)]

    assets = spec.asset_scale * rng.lognormal(0.0, spec.size_sigma, n)
    raw_equity = assets / rng.uniform(*spec.member_leverage_range, n)
    equity = raw_equity * (assets.sum() / spec.aggregate_leverage_target) / raw_equity.sum()
    if np.any(equity >= assets):
        raise ValueError("leverage target too low for the member leverage range")
    liabilities = assets - equity

    fa = rng.uniform(*spec.interbank_fraction_range, n)
    fl = rng.uniform(*spec.interbank_fraction_range, n)
    a_int = fa * assets
    l_int = fl * liabilities
    # closed system: total interbank lending equals total interbank borrowing
    if l_int.sum() > 0:
        l_int = np.minimum(l_int * a_int.sum() / l_int.sum(), liabilities)

    margin = rng.uniform(*spec.margin_ratio_range, n) * l_int
    margin_str = margin * rng.uniform(*spec.margin_uplift_range, n)
    uncovered = rng.uniform(*spec.uncovered_ratio_range, n) * margin_str
    if spec.cover2_equity_share is not None:
        uncovered = _assign_cover2_pair(uncovered, equity / equity.sum(), spec.cover2_equity_share, l_int)
    fund = default_fund_cover(uncovered, spec.cover_basis)

    members = tuple(
        ClearingMember(ids[k], equity[k], assets[k], liabilities[k], a_int[k], l_int[k],
                       margin[k], margin_str[k], uncovered[k])
        for k in range(n)
    )
    snapshot = MarketSnapshot(spec.date, members, fund)

    sig = rng.uniform(*spec.asset_vol_range, n)
    mu = rng.uniform(*spec.asset_drift_range, n)
    observations = []
    for k in range(n):
        # placeholder equity inputs; only the barrier, rate and maturity enter the forward model
        base = EquityObservation(ids[k], spec.date, 1.0, 1.0, liabilities[k], mu[k],
                                 spec.risk_free_rate, spec.maturity_years)
        e_mkt = price_doc_call(assets[k], sig[k], base)
        vol_e = equity_vol_from_assets(assets[k], sig[k], base)
        observations.append(EquityObservation(ids[k], spec.date, e_mkt, vol_e, liabilities[k],
                                              mu[k], spec.risk_free_rate, spec.maturity_years))
    return SyntheticMarket(snapshot, observations, a_int / assets,
                           np.where(liabilities > 0, l_int / liabilities, 0.0), sig)
