"""Command-line entry point: ``ccpstress {merton,synth,run,sweep,validate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, io
from .balance_sheet import PAPER_REGRESSION, RegressionCoefficients
from .contagion import BACKEND
from .errors import CCPStressError, LiquidityExhaustionError, SchemaError
from .harness import (
    RunConfig,
    run_merton,
    run_scenario,
    run_sweep,
    synthetic_spec_to_dict,
    write_run_outputs,
    write_solutions,
    write_sweep_outputs,
)
from .synthetic import SyntheticMarketSpec, generate_synthetic_market

log = logging.getLogger("ccpstress")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


def _cmd_merton(args) -> int:
    rows = io.read_observations(args.observations)
    coeffs = PAPER_REGRESSION
    if args.regression:
        coeffs = RegressionCoefficients(*args.regression)
    sols = run_merton(rows, coeffs)
    write_solutions(args.out, sols)
    n_bad = sum(s.status != "ok" for s in sols)
    log.info("wrote %d solutions to %s (%d pre-defaulted)", len(sols), args.out, n_bad)
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SyntheticMarketSpec(n_members=args.n_members, aggregate_leverage_target=args.leverage,
                               rng_seed=args.seed, cover2_equity_share=args.cover2_share)
    mkt = generate_synthetic_market(spec)
    out = Path(args.out_dir)
    io.write_market(mkt.snapshot, out / "members.csv", out / "fund.csv")
    io.write_observations(out / "observations.csv", mkt.observations,
                          mkt.interbank_asset_fraction, mkt.interbank_liability_fraction)
    cfg = {
        "input": {"members": "members.csv", "fund": "fund.csv"},
        "scenario": "distributed",
        "ensemble_size": 1000,
        "master_seed": 0,
        "shock": {"x": 1e-3, "phi": 0.5},
        "contagion": {"lgd": 0.6, "rho": 0.6, "tau": "inf", "max_rounds": 10},
        "network": {"target_density": 0.05},
        "output": {"dir": "out"},
    }
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    (out / "synthetic_spec.json").write_text(
        json.dumps(synthetic_spec_to_dict(spec), indent=2) + "\n", encoding="utf-8")
    log.info("wrote synthetic market with %d members to %s", spec.n_members, out)
    return EXIT_OK


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config)
    over = {}
    for k in ("ensemble_size", "workers", "master_seed", "scenario"):
        v = getattr(args, k, None)
        if v is not None:
            over[k] = v
    if args.out is not None:
        over["output_dir"] = args.out
    return replace(cfg, **over) if over else cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    res = run_scenario(cfg)
    out = write_run_outputs(res)
    rep = res.report
    n = cfg.contagion.max_rounds
    print(f"scenario={cfg.scenario} M={rep.ensemble_size} z={res.run.z:.6g} "
          f"R_DF(n=2)={rep.at_round('r_df', 2):.6f} R_DF(n={n})={rep.at_round('r_df', n):.6f} "
          f"R_RE(n={n})={rep.at_round('r_re', n):.6f}")
    log.info("outputs in %s", out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    res = run_sweep(cfg)
    out = write_sweep_outputs(res, cfg.output_dir)
    log.info("heatmaps in %s", out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    if args.config:
        RunConfig.from_json(args.config)
    if args.members or args.fund:
        if not (args.members and args.fund):
            raise SchemaError("--members and --fund must be given together")
        snap = io.ingest_market(args.members, args.fund)
        print(f"market ok: {len(snap)} members, default fund {snap.default_fund_total:.6g}")
    if args.observations:
        rows = io.read_observations(args.observations)
        print(f"observations ok: {len(rows)} rows")
    return EXIT_OK


def _add_run_overrides(p):
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--ensemble-size", type=int, dest="ensemble_size")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--scenario", choices=("distributed", "cover2"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccpstress", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} (kernel backend: {BACKEND})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("merton", help="invert equity observations into balance sheets")
    p.add_argument("observations")
    p.add_argument("--out", default="solutions.csv")
    p.add_argument("--regression", type=float, nargs=4,
                   metavar=("ALPHA_A", "BETA_A", "ALPHA_L", "BETA_L"))
    p.set_defaults(func=_cmd_merton)

    p = sub.add_parser("synth", help="write a synthetic market and a starter config")
    p.add_argument("out_dir")
    p.add_argument("--n-members", type=int, default=100)
    p.add_argument("--leverage", type=float, default=26.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cover2-share", type=float, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="run one scenario ensemble")
    _add_run_overrides(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a two-parameter sweep")
    _add_run_overrides(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", help="check input files and configs without running")
    p.add_argument("--config")
    p.add_argument("--members")
    p.add_argument("--fund")
    p.add_argument("--observations")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LiquidityExhaustionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CCPStressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
