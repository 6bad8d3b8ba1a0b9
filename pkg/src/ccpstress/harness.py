"""End-to-end runs: configuration, ensembles, parameter sweeps and outputs."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .balance_sheet import (
    PAPER_REGRESSION,
    InterbankSplit,
    RegressionCoefficients,
    invert_merton,
    split_interbank,
    split_interbank_regression,
)
from .contagion import ContagionParams, ContagionTrajectory, propagate
from .errors import LiquidityExhaustionError, MertonNoSolution, SchemaError
from .market import MarketSnapshot
from .metrics import EnsembleReport, StressReport, aggregate, vulnerability_report
from .netrecon import DEFAULT_DENSITY, NetworkSampler, calibrate_z
from .rng import NETWORK, SHOCK, substream
from .shocks import SCENARIOS, ShockConfig, make_shock
from .synthetic import SyntheticMarketSpec, generate_synthetic_market

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("x", "n", "lgd", "rho", "tau")
HEATMAP_METRICS = ("r_df", "r_df_clamped", "r_re")


@dataclass(frozen=True)
class SweepAxis:
    param: str
    min: float
    max: float
    steps: int
    scale: str = "linear"

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise SchemaError(f"unknown sweep parameter {self.param!r}; expected one of {SWEEP_PARAMS}")
        if self.steps < 1:
            raise SchemaError("sweep steps must be >= 1")
        if self.scale not in ("linear", "log"):
            raise SchemaError("sweep scale must be 'linear' or 'log'")
        if self.scale == "log" and not (self.min > 0 and self.max > 0):
            raise SchemaError("log-scale sweep bounds must be positive")

    def values(self) -> np.ndarray:
        if self.steps == 1:
            vals = np.array([float(self.min)])
        elif self.scale == "log":
            vals = np.geomspace(self.min, self.max, self.steps)
        else:
            vals = np.linspace(self.min, self.max, self.steps)
        if self.param == "n":
            vals = np.unique(np.round(vals).astype(int))
            if vals.min() < 1:
                raise SchemaError("sweep over n needs rounds >= 1")
        return vals


@dataclass(frozen=True)
class RunConfig:
    members_path: Optional[str] = None
    fund_path: Optional[str] = None
    synthetic: Optional[SyntheticMarketSpec] = None
    scenario: str = "distributed"
    ensemble_size: int = 1000
    x: float = 1e-3
    phi: float = 0.5
    contagion: ContagionParams = field(default_factory=ContagionParams)
    target_density: float = DEFAULT_DENSITY
    sweep: tuple[SweepAxis, ...] = ()
    sweep_rounds: tuple[int, ...] = ()
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    dump_trajectories: bool = False
    dump_networks: bool = False
    dump_shocks: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise SchemaError(f"unknown scenario {self.scenario!r}")
        if self.ensemble_size < 1:
            raise SchemaError("ensemble_size must be >= 1")
        if self.workers < 1:
            raise SchemaError("workers must be >= 1")
        if self.synthetic is None and not (self.members_path and self.fund_path):
            raise SchemaError("config needs either input files or a synthetic market spec")

    @property
    def shock(self) -> ShockConfig:
        return ShockConfig(self.x, self.phi, self.scenario, self.master_seed)

    @property
    def readout_rounds(self) -> tuple[int, ...]:
        return self.sweep_rounds or (2, self.contagion.max_rounds)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "RunConfig":
        return _config_from_dict(d, Path(base_dir) if base_dir else None)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(d, path.parent)

    def to_dict(self) -> dict:
        c = self.contagion
        out = {
            "scenario": self.scenario,
            "ensemble_size": self.ensemble_size,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "shock": {"x": self.x, "phi": self.phi},
            "contagion": {"lgd": c.lgd, "rho": c.rho, "tau": _tau_out(c.tau),
                          "max_rounds": c.max_rounds, "convergence_eps": c.convergence_eps},
            "network": {"target_density": self.target_density},
            "output": {"dir": self.output_dir, "dump_trajectories": self.dump_trajectories,
                       "dump_networks": self.dump_networks, "dump_shocks": self.dump_shocks},
        }
        if self.synthetic is not None:
            out["synthetic"] = synthetic_spec_to_dict(self.synthetic)
        else:
            out["input"] = {"members": self.members_path, "fund": self.fund_path}
        if self.sweep:
            out["sweep"] = {"axes": [asdict(a) for a in self.sweep],
                            "rounds": list(self.sweep_rounds)}
        return out


def _tau_out(tau):
    return "inf" if math.isinf(tau) else tau


def _tau_in(value):
    if value is None or (isinstance(value, str) and value.lower() in ("inf", "infinity")):
        return math.inf
    return float(value)


def _check_keys(section, d, allowed):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise SchemaError(f"config section {section!r}: unknown key(s) {', '.join(unknown)}")


def synthetic_spec_from_dict(d: dict) -> SyntheticMarketSpec:
    allowed = SyntheticMarketSpec.__dataclass_fields__
    _check_keys("synthetic", d, allowed)
    kw = {}
    for k, v in d.items():
        if isinstance(v, list):
            v = tuple(v)
        if k == "date" and v is not None:
            from datetime import date
            v = date.fromisoformat(v)
        kw[k] = v
    try:
        return SyntheticMarketSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid synthetic spec: {exc}") from exc


def synthetic_spec_to_dict(spec: SyntheticMarketSpec) -> dict:
    d = asdict(spec)
    d["date"] = spec.date.isoformat() if spec.date else None
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _config_from_dict(d, base_dir):
    _check_keys("root", d, ("input", "synthetic", "scenario", "ensemble_size", "master_seed",
                            "workers", "shock", "contagion", "network", "sweep", "output"))
    kw = {}

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return str(base_dir / p) if base_dir and not p.is_absolute() else str(p)

    if "input" in d:
        _check_keys("input", d["input"], ("members", "fund"))
        kw["members_path"] = resolve(d["input"].get("members"))
        kw["fund_path"] = resolve(d["input"].get("fund"))
    if "synthetic" in d:
        kw["synthetic"] = synthetic_spec_from_dict(d["synthetic"])
    for k in ("scenario", "ensemble_size", "master_seed", "workers"):
        if k in d:
            kw[k] = d[k]
    shock = d.get("shock", {})
    _check_keys("shock", shock, ("x", "phi"))
    kw.update({k: float(v) for k, v in shock.items()})
    cont = dict(d.get("contagion", {}))
    _check_keys("contagion", cont, ("lgd", "rho", "tau", "max_rounds", "convergence_eps",
                                    "default_threshold"))
    if "tau" in cont:
        cont["tau"] = _tau_in(cont["tau"])
    try:
        kw["contagion"] = ContagionParams(**cont)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid contagion parameters: {exc}") from exc
    net = d.get("network", {})
    _check_keys("network", net, ("target_density",))
    if "target_density" in net:
        kw["target_density"] = float(net["target_density"])
    sweep = d.get("sweep")
    if sweep:
        _check_keys("sweep", sweep, ("axes", "rounds"))
        axes = []
        for a in sweep.get("axes", []):
            _check_keys("sweep.axes", a, ("param", "min", "max", "steps", "scale"))
            a = dict(a)
            if a.get("param") == "tau":
                a["min"], a["max"] = _tau_in(a["min"]), _tau_in(a["max"])
            axes.append(SweepAxis(**a))
        kw["sweep"] = tuple(axes)
        kw["sweep_rounds"] = tuple(int(n) for n in sweep.get("rounds", ()))
    out = d.get("output", {})
    _check_keys("output", out, ("dir", "dump_trajectories", "dump_networks", "dump_shocks"))
    if "dir" in out:
        kw["output_dir"] = resolve(out["dir"])
    for k in ("dump_trajectories", "dump_networks", "dump_shocks"):
        if k in out:
            kw[k] = bool(out[k])
    try:
        return RunConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"invalid config: {exc}") from exc


def load_snapshot(config: RunConfig) -> MarketSnapshot:
    if config.synthetic is not None:
        return generate_synthetic_market(config.synthetic).snapshot
    return io.ingest_market(config.members_path, config.fund_path)


# -- ensembles ---------------------------------------------------------------


@dataclass
class Realization:
    report: StressReport
    initial_loss: float
    trajectory: Optional[ContagionTrajectory] = None
    weights: Optional[np.ndarray] = None
    losses: Optional[np.ndarray] = None


def _run_chunk(snapshot, z, shock, params, master_seed, indices, max_round, keep):
    sampler = NetworkSampler(snapshot, z)
    eq_total = snapshot.equity[snapshot.equity > 0].sum()
    out = []
    for r in indices:
        net = sampler.sample(substream(master_seed, r, NETWORK))
        sv = make_shock(snapshot, shock, substream(master_seed, r, SHOCK))
        try:
            traj = propagate(net, snapshot, sv, params)
        except LiquidityExhaustionError as exc:
            raise LiquidityExhaustionError(f"realization {r}: {exc}", exc.round_index, r) from exc
        out.append(Realization(
            report=vulnerability_report(traj, snapshot, max_round),
            initial_loss=float(sv.losses.sum() / eq_total),
            trajectory=traj if keep else None,
            weights=net.weights if keep else None,
            losses=sv.losses if keep else None,
        ))
    return out


@dataclass
class EnsembleRun:
    report: EnsembleReport
    z: float
    initial_loss: float
    realizations: list = field(default_factory=list)


def run_ensemble(snapshot: MarketSnapshot, shock: ShockConfig, params: ContagionParams,
                 ensemble_size: int, master_seed: int = 0, workers: int = 1,
                 target_density: float = DEFAULT_DENSITY, z: Optional[float] = None,
                 keep: bool = False) -> EnsembleRun:
    """Run ``ensemble_size`` joint (network, shock) realizations and aggregate them.

    Realization ``r`` draws from streams keyed by ``(master_seed, r)`` only,
    so the result is independent of ``workers``.
    """
    if z is None:
        z = calibrate_z(snapshot, target_density)
    max_round = params.max_rounds
    idx = list(range(ensemble_size))
    if workers <= 1 or ensemble_size == 1:
        reals = _run_chunk(snapshot, z, shock, params, master_seed, idx, max_round, keep)
    else:
        chunks = [c.tolist() for c in np.array_split(np.array(idx), workers) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, snapshot, z, shock, params, master_seed, c,
                                   max_round, keep) for c in chunks]
            reals = [x for f in futures for x in f.result()]
    report = aggregate([x.report for x in reals], snapshot.ids)
    return EnsembleRun(report, z, float(np.mean([x.initial_loss for x in reals])),
                       reals if keep else [])


@dataclass
class ScenarioResult:
    config: RunConfig
    snapshot: MarketSnapshot
    run: EnsembleRun

    @property
    def report(self) -> EnsembleReport:
        return self.run.report


def run_scenario(config: RunConfig, snapshot: Optional[MarketSnapshot] = None) -> ScenarioResult:
    snapshot = snapshot or load_snapshot(config)
    keep = config.dump_trajectories or config.dump_networks or config.dump_shocks
    run = run_ensemble(snapshot, config.shock, config.contagion, config.ensemble_size,
                       config.master_seed, config.workers, config.target_density, keep=keep)
    return ScenarioResult(config, snapshot, run)


# -- sweeps ------------------------------------------------------------------


@dataclass
class SweepResult:
    row_axis: SweepAxis
    col_axis: SweepAxis
    row_values: np.ndarray
    col_values: np.ndarray
    # (metric, readout round or None when n is an axis) -> (mean grid, se grid)
    grids: dict

    def grid(self, metric: str, round: Optional[int] = None):
        return self.grids[(metric, round)]


def _cell_inputs(config: RunConfig, assignment: dict):
    shock = config.shock
    params = config.contagion
    if "x" in assignment:
        shock = replace(shock, x=float(assignment["x"]))
    cont = {k: float(assignment[k]) for k in ("lgd", "rho", "tau") if k in assignment}
    if cont:
        params = replace(params, **cont)
    return shock, params


def run_sweep(config: RunConfig, snapshot: Optional[MarketSnapshot] = None) -> SweepResult:
    """Ensemble-mean metrics on a two-parameter grid.

    Every cell reuses the same per-realization streams (common random
    numbers). A sweep over ``n`` reads the metric series of a single run
    at each round instead of re-running with an early stop.
    """
    if len(config.sweep) != 2:
        raise SchemaError("a sweep needs exactly two axes")
    row_ax, col_ax = config.sweep
    if row_ax.param == col_ax.param:
        raise SchemaError("sweep axes must differ")
    snapshot = snapshot or load_snapshot(config)
    z = calibrate_z(snapshot, config.target_density)
    rows, cols = row_ax.values(), col_ax.values()
    n_axis = "row" if row_ax.param == "n" else "col" if col_ax.param == "n" else None
    if n_axis:
        n_vals = rows if n_axis == "row" else cols
        params = replace(config.contagion, max_rounds=max(config.contagion.max_rounds, int(n_vals.max())))
        config = replace(config, contagion=params)
        keys = [(m, None) for m in HEATMAP_METRICS]
    else:
        keys = [(m, n) for n in config.readout_rounds for m in HEATMAP_METRICS]
        params = replace(config.contagion,
                         max_rounds=max(config.contagion.max_rounds, max(config.readout_rounds)))
        config = replace(config, contagion=params)
    grids = {k: (np.zeros((len(rows), len(cols))), np.zeros((len(rows), len(cols)))) for k in keys}

    def fill(i, j, rep, n):
        for m in HEATMAP_METRICS:
            key = (m, None) if n_axis else (m, n)
            grids[key][0][i, j] = getattr(rep, m)[n - 1]
            grids[key][1][i, j] = getattr(rep, m + "_se")[n - 1]

    other = cols if n_axis == "row" else rows
    if n_axis:
        other_ax = col_ax if n_axis == "row" else row_ax
        for k, v in enumerate(other):
            shock, params = _cell_inputs(config, {other_ax.param: v})
            rep = run_ensemble(snapshot, shock, params, config.ensemble_size, config.master_seed,
                               config.workers, z=z).report
            for t, n in enumerate(n_vals):
                i, j = (t, k) if n_axis == "row" else (k, t)
                fill(i, j, rep, int(n))
    else:
        for i, rv in enumerate(rows):
            for j, cv in enumerate(cols):
                shock, params = _cell_inputs(config, {row_ax.param: rv, col_ax.param: cv})
                rep = run_ensemble(snapshot, shock, params, config.ensemble_size,
                                   config.master_seed, config.workers, z=z).report
                for n in config.readout_rounds:
                    fill(i, j, rep, n)
    return SweepResult(row_ax, col_ax, rows, cols, grids)


# -- outputs -----------------------------------------------------------------


TRIPLET_COLUMNS = ("member_id", "leverage", "h1", "h2", "hstar", "h1_se", "h2_se", "hstar_se",
                   "default_frequency")
METRIC_COLUMNS = ("round", "r_df", "r_df_se", "r_df_clamped", "r_df_clamped_se", "r_re",
                  "r_re_se", "uncovered_sum", "n_defaults", "total_vulnerability",
                  "total_vulnerability_se")


def write_run_outputs(result: ScenarioResult, out_dir=None) -> Path:
    cfg, snap, run = result.config, result.snapshot, result.run
    rep = run.report
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_csv(out / "triplets.csv", TRIPLET_COLUMNS, (
        (rep.member_ids[k], rep.leverage[k], rep.h1[k], rep.h2[k], rep.hstar[k], rep.h1_se[k],
         rep.h2_se[k], rep.hstar_se[k], rep.default_frequency[k])
        for k in rep.order
    ))
    io.write_csv(out / "metrics.csv", METRIC_COLUMNS, (
        (int(n), *(getattr(rep, c)[n - 1] for c in METRIC_COLUMNS[1:]))
        for n in rep.rounds
    ))
    c = cfg.contagion
    summary = [
        ("scenario", cfg.scenario), ("ensemble_size", cfg.ensemble_size),
        ("master_seed", cfg.master_seed), ("n_members", len(snap)),
        ("default_fund_total", snap.default_fund_total), ("z", run.z),
        ("x", cfg.x), ("phi", cfg.phi), ("lgd", c.lgd), ("rho", c.rho), ("tau", c.tau),
        ("max_rounds", c.max_rounds), ("target_density", cfg.target_density),
        ("aggregate_initial_loss", run.initial_loss), ("mean_rounds_run", rep.mean_rounds_run),
        ("converged_fraction", rep.converged_fraction),
    ]
    io.write_csv(out / "summary.csv", ("key", "value"), summary)
    if cfg.dump_trajectories:
        io.write_csv(out / "trajectories.csv", ("realization", "round", "member_id", "h"), (
            (r, n, snap.ids[k], real.trajectory.h[n, k])
            for r, real in enumerate(run.realizations)
            for n in range(real.trajectory.rounds_run + 1)
            for k in range(len(snap))
        ))
        io.write_csv(out / "fire_sales.csv", ("realization", "n", "gamma", "q"), (
            (r, n, g, q)
            for r, real in enumerate(run.realizations)
            for n, (g, q) in enumerate(zip(real.trajectory.gamma_series, real.trajectory.q_series))
        ))
    if cfg.dump_shocks:
        io.write_csv(out / "shocks.csv", ("realization", "member_id", "loss", "h1"), (
            (r, snap.ids[k], real.losses[k], real.report.h1[k])
            for r, real in enumerate(run.realizations) for k in range(len(snap))
        ))
    if cfg.dump_networks:
        net_dir = out / "networks"
        for r, real in enumerate(run.realizations):
            src, dst = np.nonzero(real.weights)
            io.write_csv(net_dir / f"edges_{r:05d}.csv", ("source", "target", "weight"), (
                (snap.ids[i], snap.ids[j], real.weights[i, j]) for i, j in zip(src, dst)
            ))
        sampler = NetworkSampler(snap, run.z)
        mean_w = np.mean([real.weights for real in run.realizations], axis=0)
        src, dst = np.nonzero(sampler.p)
        io.write_csv(out / "network_stats.csv", ("source", "target", "p_ij", "mean_weight"), (
            (snap.ids[i], snap.ids[j], sampler.p[i, j], mean_w[i, j]) for i, j in zip(src, dst)
        ))
    return out


def write_sweep_outputs(result: SweepResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corner = f"{result.row_axis.param}\\{result.col_axis.param}"
    for (metric, n), (mean, se) in result.grids.items():
        suffix = "" if n is None else f"_n{n}"
        for name, grid in ((metric, mean), (metric + "_se", se)):
            io.write_csv(out / f"heatmap_{name}{suffix}.csv",
                         (corner, *(io.fmt(v) for v in result.col_values)),
                         ((rv, *grid[i]) for i, rv in enumerate(result.row_values)))
    return out


# -- balance-sheet pipeline --------------------------------------------------


@dataclass(frozen=True)
class SolutionRow:
    member_id: str
    date: object
    status: str
    assets: float
    asset_vol: float
    liabilities: float
    equity: float
    default_probability: float
    residual_norm: float
    interbank_assets: float
    interbank_liabilities: float
    split_method: str

    def as_row(self):
        return tuple(getattr(self, c) for c in io.SOLUTION_COLUMNS)


def run_merton(rows: Sequence[io.ObservationRow],
               coeffs: RegressionCoefficients = PAPER_REGRESSION) -> list[SolutionRow]:
    """Invert every observation and split interbank positions.

    Members with nonpositive equity or no admissible solution are flagged
    ``pre-defaulted`` with zero equity; the others report the balance-sheet
    equity ``assets - liabilities``.
    """
    out = []
    for row in rows:
        obs = row.observation
        sol = None
        if obs is not None:
            try:
                sol = invert_merton(obs)
            except MertonNoSolution as exc:
                log.warning("%s", exc)
        if sol is None:
            out.append(SolutionRow(row.member_id, row.date, "pre-defaulted", math.nan, math.nan,
                                   row.book_liabilities, 0.0, 1.0, math.nan, 0.0, 0.0, ""))
            continue
        if row.uses_regression:
            split = split_interbank_regression(sol, coeffs)
        else:
            ref = InterbankSplit(row.interbank_asset_fraction, row.interbank_liability_fraction)
            split = split_interbank(sol, ref, (1.0, 1.0))
        out.append(SolutionRow(row.member_id, row.date, "ok", sol.assets, sol.asset_vol,
                               sol.liabilities, sol.assets - sol.liabilities,
                               sol.default_probability, sol.residual_norm,
                               split.interbank_assets, split.interbank_liabilities, split.method))
    return out


def write_solutions(path, solutions: Sequence[SolutionRow]) -> None:
    io.write_csv(path, io.SOLUTION_COLUMNS, (s.as_row() for s in solutions))
