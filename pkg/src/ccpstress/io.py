"""CSV schemas, readers and writers.

All files are UTF-8 with a header row and a fixed column order. Floats are
written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import csv
import math
import numbers
from dataclasses import dataclass
from datetime import date as Date
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .balance_sheet import EquityObservation
from .errors import SchemaError
from .market import MEMBER_FIELDS, ClearingMember, MarketSnapshot

MEMBER_COLUMNS = MEMBER_FIELDS
FUND_COLUMNS = ("date", "default_fund_total")
OBSERVATION_COLUMNS = (
    "member_id", "date", "equity_value", "equity_vol", "book_liabilities",
    "asset_drift", "risk_free_rate", "maturity_years",
    "interbank_asset_fraction", "interbank_liability_fraction",
)
# optional in input files, with defaults
_OBS_DEFAULTS = {
    "asset_drift": "0", "risk_free_rate": "0", "maturity_years": "1",
    "interbank_asset_fraction": "", "interbank_liability_fraction": "",
}
SOLUTION_COLUMNS = (
    "member_id", "date", "status", "assets", "asset_vol", "liabilities", "equity",
    "default_probability", "residual_norm", "interbank_assets", "interbank_liabilities",
    "split_method",
)


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, numbers.Integral):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, Date):
        return value.isoformat()
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _read_rows(path, required: Sequence[str], optional: Sequence[str] = ()):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}",
                              [(1, c, "missing column") for c in missing])
        return [(k + 2, row) for k, row in enumerate(reader)]


def _number(row_no, field, text, problems, allow_blank=False):
    text = (text or "").strip()
    if text == "" and allow_blank:
        return None
    try:
        v = float(text)
    except ValueError:
        problems.append((row_no, field, f"not a number: {text!r}"))
        return None
    if math.isnan(v):
        problems.append((row_no, field, "NaN not allowed"))
        return None
    return v


def _date(row_no, field, text, problems):
    text = (text or "").strip()
    if not text:
        return None
    try:
        return Date.fromisoformat(text)
    except ValueError:
        problems.append((row_no, field, f"not an ISO date: {text!r}"))
        return None


def read_members(path) -> list[ClearingMember]:
    problems = []
    members = []
    seen = set()
    for row_no, row in _read_rows(path, MEMBER_COLUMNS):
        mid = (row["id"] or "").strip()
        if not mid:
            problems.append((row_no, "id", "empty id"))
            continue
        if mid in seen:
            problems.append((row_no, "id", f"duplicate member id {mid!r}"))
        seen.add(mid)
        vals = [_number(row_no, c, row[c], problems) for c in MEMBER_COLUMNS[1:]]
        if any(v is None for v in vals):
            continue
        m = ClearingMember(mid, *vals)
        for field, msg in m.violations():
            problems.append((row_no, field, f"member {mid}: {msg}"))
        members.append(m)
    if problems:
        raise SchemaError(f"{path}: invalid members file", problems)
    if not members:
        raise SchemaError(f"{path}: member list is empty", [(2, "id", "no rows")])
    return members


def read_fund(path) -> tuple[Optional[Date], float]:
    problems = []
    rows = _read_rows(path, FUND_COLUMNS)
    if len(rows) != 1:
        raise SchemaError(f"{path}: expected exactly one fund row, found {len(rows)}")
    row_no, row = rows[0]
    d = _date(row_no, "date", row["date"], problems)
    df = _number(row_no, "default_fund_total", row["default_fund_total"], problems)
    if df is not None and not df > 0:
        problems.append((row_no, "default_fund_total", "must be > 0"))
    if problems:
        raise SchemaError(f"{path}: invalid fund file", problems)
    return d, df


def ingest_market(members_path, fund_path) -> MarketSnapshot:
    members = read_members(members_path)
    d, df = read_fund(fund_path)
    return MarketSnapshot(d, tuple(members), df)


def write_market(snapshot: MarketSnapshot, members_path, fund_path) -> None:
    write_csv(members_path, MEMBER_COLUMNS,
              ([getattr(m, c) for c in MEMBER_COLUMNS] for m in snapshot.members))
    write_csv(fund_path, FUND_COLUMNS, [(snapshot.date, snapshot.default_fund_total)])


@dataclass(frozen=True)
class ObservationRow:
    """One parsed observation line. ``observation`` is None for pre-defaulted members."""

    member_id: str
    date: Optional[Date]
    equity_value: float
    equity_vol: float
    book_liabilities: float
    asset_drift: float
    risk_free_rate: float
    maturity_years: float
    interbank_asset_fraction: Optional[float]
    interbank_liability_fraction: Optional[float]

    @property
    def observation(self) -> Optional[EquityObservation]:
        if self.equity_value <= 0:
            return None
        return EquityObservation(self.member_id, self.date, self.equity_value, self.equity_vol,
                                 self.book_liabilities, self.asset_drift, self.risk_free_rate,
                                 self.maturity_years)

    @property
    def uses_regression(self) -> bool:
        return self.interbank_asset_fraction is None or self.interbank_liability_fraction is None


def read_observations(path) -> list[ObservationRow]:
    problems = []
    out = []
    required = [c for c in OBSERVATION_COLUMNS if c not in _OBS_DEFAULTS]
    for row_no, row in _read_rows(path, required):
        for k, v in _OBS_DEFAULTS.items():
            if row.get(k) is None:
                row[k] = v
        mid = (row["member_id"] or "").strip()
        if not mid:
            problems.append((row_no, "member_id", "empty id"))
            continue
        d = _date(row_no, "date", row["date"], problems)
        nums = {c: _number(row_no, c, row[c], problems) for c in OBSERVATION_COLUMNS[2:8]}
        fracs = {c: _number(row_no, c, row[c], problems, allow_blank=True)
                 for c in OBSERVATION_COLUMNS[8:]}
        if any(v is None for v in nums.values()):
            continue
        if nums["equity_value"] > 0 and not nums["equity_vol"] > 0:
            problems.append((row_no, "equity_vol", "must be > 0"))
        if not nums["book_liabilities"] > 0:
            problems.append((row_no, "book_liabilities", "must be > 0"))
        if not nums["maturity_years"] > 0:
            problems.append((row_no, "maturity_years", "must be > 0"))
        for c, v in fracs.items():
            if v is not None and not 0 <= v <= 1:
                problems.append((row_no, c, "must lie in [0, 1]"))
        out.append(ObservationRow(mid, d, **nums, **fracs))
    if problems:
        raise SchemaError(f"{path}: invalid observations file", problems)
    if not out:
        raise SchemaError(f"{path}: no observations", [(2, "member_id", "no rows")])
    return out


def write_observations(path, observations: Sequence[EquityObservation],
                       asset_fractions=None, liability_fractions=None) -> None:
    rows = []
    for k, o in enumerate(observations):
        fa = None if asset_fractions is None else float(asset_fractions[k])
        fl = None if liability_fractions is None else float(liability_fractions[k])
        rows.append((o.member_id, o.date, o.equity_value, o.equity_vol, o.book_liabilities,
                     o.asset_drift, o.risk_free_rate, o.maturity_years, fa, fl))
    write_csv(path, OBSERVATION_COLUMNS, rows)
