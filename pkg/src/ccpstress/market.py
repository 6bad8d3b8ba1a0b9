"""Clearing members and market snapshots."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date as Date
from functools import cached_property
from typing import Optional

import numpy as np

IDENTITY_RTOL = 1e-6


@dataclass(frozen=True)
class ClearingMember:
    id: str
    equity: float
    assets_total: float
    liabilities_total: float
    interbank_assets: float
    interbank_liabilities: float
    margin_ordinary: float
    margin_stressed: float
    uncovered_exposure: float

    def violations(self, rtol: float = IDENTITY_RTOL) -> list[tuple[str, str]]:
        """Return (field, message) for each broken invariant."""
        out = []
        scale = max(abs(self.assets_total), abs(self.liabilities_total), abs(self.equity), 1e-300)
        if abs(self.assets_total - self.liabilities_total - self.equity) > rtol * scale:
            out.append(("equity", "equity != assets_total - liabilities_total"))
        if not 0 <= self.interbank_assets <= self.assets_total * (1 + rtol):
            out.append(("interbank_assets", "must lie in [0, assets_total]"))
        if not 0 <= self.interbank_liabilities <= self.liabilities_total * (1 + rtol):
            out.append(("interbank_liabilities", "must lie in [0, liabilities_total]"))
        for name in ("margin_ordinary", "margin_stressed", "uncovered_exposure"):
            if not getattr(self, name) >= 0:
                out.append((name, "must be >= 0"))
        return out


@dataclass(frozen=True)
class MarketSnapshot:
    date: Optional[Date]
    members: tuple[ClearingMember, ...]
    default_fund_total: float

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        ids = [m.id for m in self.members]
        if not ids:
            raise ValueError("snapshot has no members")
        if len(set(ids)) != len(ids):
            raise ValueError("member ids must be unique")
        if not self.default_fund_total > 0:
            raise ValueError("default_fund_total must be > 0")

    def __len__(self):
        return len(self.members)

    @cached_property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    def _col(self, name):
        return np.array([getattr(m, name) for m in self.members], dtype=float)

    @cached_property
    def equity(self) -> np.ndarray:
        return self._col("equity")

    @cached_property
    def assets(self) -> np.ndarray:
        return self._col("assets_total")

    @cached_property
    def liabilities(self) -> np.ndarray:
        return self._col("liabilities_total")

    @cached_property
    def interbank_assets(self) -> np.ndarray:
        return self._col("interbank_assets")

    @cached_property
    def interbank_liabilities(self) -> np.ndarray:
        return self._col("interbank_liabilities")

    @cached_property
    def margin_ordinary(self) -> np.ndarray:
        return self._col("margin_ordinary")

    @cached_property
    def margin_stressed(self) -> np.ndarray:
        return self._col("margin_stressed")

    @cached_property
    def uncovered_exposure(self) -> np.ndarray:
        return self._col("uncovered_exposure")

    @cached_property
    def interbank_volume(self) -> float:
        return float(self.interbank_assets.sum())

    def leverage(self) -> np.ndarray:
        """Inter-member leverage ``A_int / E``; infinite for exposed members with no equity."""
        with np.errstate(divide="ignore", invalid="ignore"):
            lev = self.interbank_assets / self.equity
        lev[self.equity <= 0] = np.where(self.interbank_assets[self.equity <= 0] > 0, np.inf, 0.0)
        return lev

    def scaled(self, factor: float) -> "MarketSnapshot":
        """Copy with every currency field multiplied by ``factor``."""
        ms = [
            ClearingMember(
                m.id, *(factor * getattr(m, f) for f in _CURRENCY_FIELDS)
            )
            for m in self.members
        ]
        return MarketSnapshot(self.date, tuple(ms), factor * self.default_fund_total)


_CURRENCY_FIELDS = (
    "equity",
    "assets_total",
    "liabilities_total",
    "interbank_assets",
    "interbank_liabilities",
    "margin_ordinary",
    "margin_stressed",
    "uncovered_exposure",
)
MEMBER_FIELDS = ("id",) + _CURRENCY_FIELDS
