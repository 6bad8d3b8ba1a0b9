"""Daily balance sheets from equity data via a down-and-out call Merton model.

Equity is priced as a down-and-out call on total assets whose barrier and
strike both equal book liabilities. Observed equity value and volatility are
inverted for asset value and asset volatility; default probability is the
first-passage probability of the asset GBM through the liability barrier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date as Date
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, MertonNoConvergence, MertonNoSolution

__all__ = [
    "EquityObservation",
    "MertonSolution",
    "InterbankSplit",
    "RegressionCoefficients",
    "PAPER_REGRESSION",
    "price_doc_call",
    "equity_vol_from_assets",
    "invert_merton",
    "first_passage_probability",
    "split_interbank",
    "split_interbank_regression",
    "estimate_equity_vol",
]

_SQRT2 = math.sqrt(2.0)
RESIDUAL_TOL = 1e-8
FD_STEP = 1e-6
VOL_WINDOW = 250


def _ncdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


@dataclass(frozen=True)
class EquityObservation:
    member_id: str
    date: Optional[Date]
    equity_value: float
    equity_vol: float
    book_liabilities: float
    asset_drift: float = 0.0
    risk_free_rate: float = 0.0
    maturity_years: float = 1.0

    def __post_init__(self):
        if not self.equity_value > 0:
            raise DomainError(f"{self.member_id}: equity_value must be > 0")
        if not self.equity_vol > 0:
            raise DomainError(f"{self.member_id}: equity_vol must be > 0")
        if not self.book_liabilities > 0:
            raise DomainError(f"{self.member_id}: book_liabilities must be > 0")
        if not self.maturity_years > 0:
            raise DomainError(f"{self.member_id}: maturity_years must be > 0")


@dataclass(frozen=True)
class MertonSolution:
    assets: float
    asset_vol: float
    liabilities: float
    default_probability: float
    residual_norm: float


@dataclass(frozen=True)
class InterbankSplit:
    interbank_assets: float
    interbank_liabilities: float
    method: str = "constant-proportion"


@dataclass(frozen=True)
class RegressionCoefficients:
    """Coefficients of ``log A = alpha + beta * log A_int`` (and the same for L)."""

    alpha_a: float
    beta_a: float
    alpha_l: float
    beta_l: float

    def __post_init__(self):
        if self.beta_a == 0 or self.beta_l == 0:
            raise DomainError("regression slopes must be nonzero")


# Fit on quarterly bank balance sheets, natural logs.
PAPER_REGRESSION = RegressionCoefficients(alpha_a=1.70, beta_a=0.81, alpha_l=1.06, beta_l=0.93)


def _doc_price_and_delta(A, s, L, r, T):
    """Return (price, A * dE/dA) of the down-and-out call with barrier = strike = L."""
    if not A > L:
        raise DomainError(f"assets {A!r} at or below barrier {L!r}: option knocked out")
    if not s > 0:
        raise DomainError("asset volatility must be > 0")
    sq = s * math.sqrt(T)
    disc = math.exp(-r * T)
    log_la = math.log(L / A)
    lam = r / (s * s) + 0.5
    d_plus = (-log_la + (r + 0.5 * s * s) * T) / sq
    d_minus = d_plus - sq
    y = log_la / sq + lam * sq
    y_tilde = y - sq
    # (L/A)^(2 lam) and (L/A)^(2 lam - 2); L/A < 1 so both only underflow.
    pw = math.exp(2.0 * lam * log_la)
    pw2 = math.exp((2.0 * lam - 2.0) * log_la)
    n_dp, n_dm, n_y, n_yt = _ncdf(d_plus), _ncdf(d_minus), _ncdf(y), _ncdf(y_tilde)
    price = n_dp * A - n_dm * L * disc - n_y * A * pw + n_yt * L * disc * pw2
    # the density terms cancel pairwise, leaving the closed form delta
    a_delta = (
        n_dp * A
        + n_y * (2.0 * lam - 1.0) * A * pw
        + n_yt * (2.0 - 2.0 * lam) * A * disc * math.exp((2.0 * lam - 1.0) * log_la)
    )
    return price, a_delta


def price_doc_call(assets: float, asset_vol: float, obs: EquityObservation) -> float:
    """Equity value as a down-and-out call on ``assets``.

    Raises
    ------
    DomainError
        If ``assets <= obs.book_liabilities`` (the option is knocked out).
    """
    price, _ = _doc_price_and_delta(
        assets, asset_vol, obs.book_liabilities, obs.risk_free_rate, obs.maturity_years
    )
    return price


def equity_vol_from_assets(assets: float, asset_vol: float, obs: EquityObservation) -> float:
    """Equity volatility implied by ``sigma_E * E = A * sigma_A * dE/dA``."""
    price, a_delta = _doc_price_and_delta(
        assets, asset_vol, obs.book_liabilities, obs.risk_free_rate, obs.maturity_years
    )
    if price <= 0:
        raise DomainError("option value underflowed to zero; equity volatility undefined")
    return asset_vol * a_delta / price


def _residuals(A, s, obs):
    price, a_delta = _doc_price_and_delta(
        A, s, obs.book_liabilities, obs.risk_free_rate, obs.maturity_years
    )
    if price <= 0:
        return math.inf, math.inf
    return price / obs.equity_value - 1.0, (s * a_delta / price) / obs.equity_vol - 1.0


def _newton(obs, max_iter):
    L = obs.book_liabilities
    E = obs.equity_value
    A = E + L * math.exp(-obs.risk_free_rate * obs.maturity_years)
    if A <= L:
        A = L + E
    s = obs.equity_vol * E / (E + L)
    f1, f2 = _residuals(A, s, obs)
    norm = math.hypot(f1, f2)
    for _ in range(max_iter):
        if norm <= 1e-13:
            break
        # central-difference Jacobian, relative steps
        hA = FD_STEP * A
        hs = FD_STEP * s
        if A - hA <= L:
            hA = 0.5 * (A - L)
        a1, a2 = _residuals(A + hA, s, obs)
        b1, b2 = _residuals(A - hA, s, obs)
        c1, c2 = _residuals(A, s + hs, obs)
        d1, d2 = _residuals(A, s - hs, obs)
        j11, j21 = (a1 - b1) / (2 * hA), (a2 - b2) / (2 * hA)
        j12, j22 = (c1 - d1) / (2 * hs), (c2 - d2) / (2 * hs)
        det = j11 * j22 - j12 * j21
        if not math.isfinite(det) or det == 0:
            return None
        dA = (j22 * f1 - j12 * f2) / det
        ds = (j11 * f2 - j21 * f1) / det
        t = 1.0
        while t > 1e-10:
            A_new, s_new = A - t * dA, s - t * ds
            if A_new > L and s_new > 0:
                try:
                    g1, g2 = _residuals(A_new, s_new, obs)
                except (DomainError, OverflowError):
                    g1 = g2 = math.inf
                new_norm = math.hypot(g1, g2)
                if new_norm < norm:
                    break
            t *= 0.5
        else:
            # line search stalled at the noise floor
            return (A, s, norm) if norm <= RESIDUAL_TOL else None
        A, s, f1, f2, norm = A_new, s_new, g1, g2, new_norm
    return (A, s, norm) if norm <= RESIDUAL_TOL else None


def _assets_for_vol(s, obs):
    L, E = obs.book_liabilities, obs.equity_value
    T, r = obs.maturity_years, obs.risk_free_rate

    def f(A):
        return _doc_price_and_delta(A, s, L, r, T)[0] - E

    hi = L + E
    while f(hi) < 0:
        hi = L + 2.0 * (hi - L)
        if hi > 1e6 * (L + E):
            return None
    lo = L * (1.0 + 1e-15)
    return brentq(f, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)


def _bracketed(obs):
    """Nested bracketing: assets solved for each trial volatility."""

    def g(s):
        A = _assets_for_vol(s, obs)
        if A is None:
            return math.nan
        return equity_vol_from_assets(A, s, obs) - obs.equity_vol

    grid = np.geomspace(1e-4, 5.0, 80)
    prev_s, prev_g = None, None
    for s in grid:
        try:
            val = g(s)
        except (DomainError, OverflowError, ValueError):
            val = math.nan
        if math.isfinite(val):
            if val == 0:
                return _assets_for_vol(s, obs), s
            if prev_g is not None and (prev_g < 0) != (val < 0):
                s_star = brentq(g, prev_s, s, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
                return _assets_for_vol(s_star, obs), s_star
            prev_s, prev_g = s, val
    raise MertonNoSolution(
        f"{obs.member_id}: no asset value above the barrier matches the observed equity; "
        "member is effectively in default"
    )


def invert_merton(obs: EquityObservation, max_iter: int = 100) -> MertonSolution:
    """Solve the price and volatility equations for (assets, asset_vol).

    Damped Newton with a central finite-difference Jacobian, falling back to
    nested bracketing on the asset volatility when Newton stalls.
    """
    found = _newton(obs, max_iter)
    if found is None:
        A, s = _bracketed(obs)
        f1, f2 = _residuals(A, s, obs)
        norm = math.hypot(f1, f2)
        if not norm <= RESIDUAL_TOL:
            raise MertonNoConvergence(
                f"{obs.member_id}: residual {norm:.3e} after fallback exceeds {RESIDUAL_TOL:g}"
            )
    else:
        A, s, norm = found
    sol = MertonSolution(
        assets=A,
        asset_vol=s,
        liabilities=obs.book_liabilities,
        default_probability=math.nan,
        residual_norm=norm,
    )
    pd = first_passage_probability(sol, obs)
    return MertonSolution(A, s, obs.book_liabilities, pd, norm)


def first_passage_probability(sol: MertonSolution, obs: EquityObservation) -> float:
    """Probability that assets hit the liability barrier within the horizon.

    Uses the physical drift ``obs.asset_drift`` of the asset GBM.
    """
    A, s, L = sol.assets, sol.asset_vol, obs.book_liabilities
    T = obs.maturity_years
    if not A > L:
        raise DomainError("assets must exceed the barrier")
    nu = obs.asset_drift - 0.5 * s * s
    sq = s * math.sqrt(T)
    x = math.log(L / A)
    p = _ncdf((x - nu * T) / sq)
    expo = 2.0 * nu * x / (s * s)
    if expo < 700:
        p += math.exp(expo) * _ncdf((x + nu * T) / sq)
    return min(1.0, max(0.0, p))


def split_interbank(
    sol: MertonSolution,
    reference: InterbankSplit,
    reference_totals: tuple[float, float],
) -> InterbankSplit:
    """Scale interbank positions with totals, holding the reference proportions fixed."""
    ref_assets, ref_liabs = reference_totals
    frac_a = reference.interbank_assets / ref_assets if ref_assets > 0 else 0.0
    frac_l = reference.interbank_liabilities / ref_liabs if ref_liabs > 0 else 0.0
    if not (0 <= frac_a <= 1 and 0 <= frac_l <= 1):
        raise DomainError("reference interbank proportions must lie in [0, 1]")
    return InterbankSplit(frac_a * sol.assets, frac_l * sol.liabilities, "constant-proportion")


def split_interbank_regression(sol: MertonSolution, coeffs: RegressionCoefficients) -> InterbankSplit:
    """Invert the log-log regression of totals on interbank positions.

    The result is clamped to ``[0, total]``; with slopes below one the clamp
    binds for large balance sheets.
    """
    a_int = math.exp((math.log(sol.assets) - coeffs.alpha_a) / coeffs.beta_a)
    l_int = math.exp((math.log(sol.liabilities) - coeffs.alpha_l) / coeffs.beta_l)
    return InterbankSplit(
        min(max(a_int, 0.0), sol.assets),
        min(max(l_int, 0.0), sol.liabilities),
        "log-regression",
    )


def estimate_equity_vol(prices: Sequence[float], window: int = VOL_WINDOW) -> float:
    """Annualized volatility of the last ``window`` daily log-returns."""
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or p.size < 3:
        raise ValueError("need at least three prices")
    if np.any(p <= 0):
        raise ValueError("prices must be positive")
    rets = np.diff(np.log(p))[-window:]
    return float(np.std(rets, ddof=1) * math.sqrt(VOL_WINDOW))
