"""Systemic-loss measures and vulnerability summaries."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .contagion import ContagionTrajectory
from .market import MarketSnapshot


def _padded(trajectory: ContagionTrajectory, max_round: int) -> np.ndarray:
    """Rows 0..max_round, repeating the stationary state past the stop."""
    idx = np.minimum(np.arange(max_round + 1), trajectory.rounds_run)
    return trajectory.h[idx]


def residual_default_fund(trajectory: ContagionTrajectory, snapshot: MarketSnapshot, round: int) -> float:
    """Share of the default fund left after covering defaulted members' uncovered exposure.

    Negative when the exposure of defaulted members exceeds the fund.
    """
    dead = trajectory.defaulted_at(round)
    df = snapshot.default_fund_total
    return float((df - snapshot.uncovered_exposure[dead].sum()) / df)


def residual_equity(trajectory: ContagionTrajectory, snapshot: MarketSnapshot, round: int) -> float:
    """Equity left after ``round`` relative to equity after the initial shock."""
    eq = snapshot.equity
    e1 = (eq * (1.0 - trajectory.h_at(1))).sum()
    if not e1 > 0:
        raise ValueError("no equity left after the initial shock")
    en = (eq * (1.0 - trajectory.h_at(round))).sum()
    return float(1.0 - (e1 - en) / e1)


@dataclass(frozen=True)
class StressReport:
    """One realization reduced to triplets and per-round metric series.

    Series are indexed by round ``1..max_round`` (position 0 is round 1).
    ``order`` sorts members by final distress, largest first.
    """

    h1: np.ndarray
    h2: np.ndarray
    hstar: np.ndarray
    leverage: np.ndarray
    defaulted: list
    r_df: np.ndarray
    r_re: np.ndarray
    uncovered_sum: np.ndarray
    total_vulnerability: np.ndarray
    rounds_run: int
    converged: bool

    @property
    def r_df_clamped(self) -> np.ndarray:
        return np.maximum(self.r_df, 0.0)

    @property
    def order(self) -> np.ndarray:
        return np.argsort(-self.hstar, kind="stable")

    @property
    def max_round(self) -> int:
        return len(self.r_df)


def vulnerability_report(trajectory: ContagionTrajectory, snapshot: MarketSnapshot,
                         max_round: Optional[int] = None) -> StressReport:
    max_round = trajectory.rounds_run if max_round is None else max_round
    max_round = max(max_round, 1)
    H = _padded(trajectory, max_round)[1:]
    dead = H >= trajectory.default_threshold
    ue = snapshot.uncovered_exposure
    df = snapshot.default_fund_total
    uncovered = (dead * ue).sum(axis=1)
    eq = snapshot.equity
    e1 = (eq * (1.0 - H[0])).sum()
    if e1 > 0:
        en = (eq * (1.0 - H)).sum(axis=1)
        r_re = 1.0 - (e1 - en) / e1
    else:
        r_re = np.full(max_round, np.nan)
    return StressReport(
        h1=trajectory.h_at(1).copy(),
        h2=trajectory.h_at(2).copy(),
        hstar=trajectory.final.copy(),
        leverage=snapshot.leverage(),
        defaulted=[np.flatnonzero(row) for row in dead],
        r_df=(df - uncovered) / df,
        r_re=r_re,
        uncovered_sum=uncovered,
        total_vulnerability=H.sum(axis=1),
        rounds_run=trajectory.rounds_run,
        converged=trajectory.converged,
    )


def _mean_se(stack: np.ndarray):
    m = stack.mean(axis=0)
    if stack.shape[0] > 1:
        se = stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])
    else:
        se = np.zeros_like(m)
    return m, se


@dataclass(frozen=True)
class EnsembleReport:
    """Ensemble means (and standard errors) of per-realization reports."""

    member_ids: list
    leverage: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    hstar: np.ndarray
    h1_se: np.ndarray
    h2_se: np.ndarray
    hstar_se: np.ndarray
    default_frequency: np.ndarray
    r_df: np.ndarray
    r_df_se: np.ndarray
    r_df_clamped: np.ndarray
    r_df_clamped_se: np.ndarray
    r_re: np.ndarray
    r_re_se: np.ndarray
    uncovered_sum: np.ndarray
    n_defaults: np.ndarray
    total_vulnerability: np.ndarray
    total_vulnerability_se: np.ndarray
    mean_rounds_run: float
    converged_fraction: float
    ensemble_size: int

    @property
    def rounds(self) -> np.ndarray:
        return np.arange(1, len(self.r_df) + 1)

    @property
    def order(self) -> np.ndarray:
        return np.argsort(-self.hstar, kind="stable")

    def at_round(self, name: str, n: int):
        """Metric series value at round ``n`` (1-based)."""
        return getattr(self, name)[n - 1]


def aggregate(reports: Sequence[StressReport], member_ids: Sequence[str]) -> EnsembleReport:
    """Deterministic ordered reduction over realizations."""
    if not reports:
        raise ValueError("no reports to aggregate")

    def stack(name):
        return np.stack([getattr(r, name) for r in reports])

    h1, h1_se = _mean_se(stack("h1"))
    h2, h2_se = _mean_se(stack("h2"))
    hs, hs_se = _mean_se(stack("hstar"))
    r_df, r_df_se = _mean_se(stack("r_df"))
    r_dfc, r_dfc_se = _mean_se(stack("r_df_clamped"))
    r_re, r_re_se = _mean_se(stack("r_re"))
    tv, tv_se = _mean_se(stack("total_vulnerability"))
    thr_dead = np.stack([np.isin(np.arange(len(r.hstar)), r.defaulted[-1]) for r in reports])
    return EnsembleReport(
        member_ids=list(member_ids),
        leverage=reports[0].leverage,
        h1=h1, h2=h2, hstar=hs, h1_se=h1_se, h2_se=h2_se, hstar_se=hs_se,
        default_frequency=thr_dead.mean(axis=0),
        r_df=r_df, r_df_se=r_df_se, r_df_clamped=r_dfc, r_df_clamped_se=r_dfc_se,
        r_re=r_re, r_re_se=r_re_se,
        uncovered_sum=stack("uncovered_sum").mean(axis=0),
        n_defaults=np.stack([[len(d) for d in r.defaulted] for r in reports]).mean(axis=0),
        total_vulnerability=tv, total_vulnerability_se=tv_se,
        mean_rounds_run=float(np.mean([r.rounds_run for r in reports])),
        converged_fraction=float(np.mean([r.converged for r in reports])),
        ensemble_size=len(reports),
    )
