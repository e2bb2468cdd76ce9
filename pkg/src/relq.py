#!/usr/bin/env python3
"""
Command-line entry point for the resource-loss benchmark.

Subcommands:
  pmf       derive the per-session PRB demand PMF from the radio config
  solve     analytic loss probability and utilization at one operating point
  simulate  discrete-event estimate at one operating point
  sweep     run the configured parameter grid
  fit-spp   fit a switched Poisson process to (rate, CoV, lag-1 decay)

Usage:
    python src/relq.py pmf --config configs/pmf_c20.env
    python src/relq.py solve --config configs/default_point.env
    python src/relq.py sweep --config configs/arrival_rate_c10.env --jobs 4
    python src/relq.py fit-spp --rate 0.1 --cov 2 --beta 0.1

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from mmwave_relq.config import (
    ExperimentConfig,
    SweepSpec,
    TrafficSpec,
    apply_overrides,
    config_from_mapping,
    load_experiment_config,
)
from mmwave_relq.errors import NumericalError
from mmwave_relq.experiment import (
    emit_pmf,
    pmf_path,
    results_path,
    run_experiment,
    write_pmf,
    write_results,
)
from mmwave_relq.radio import radio_summary
from mmwave_relq.results import write_csv
from mmwave_relq.traffic import fit_spp_search, resolve_cov_amplitude, spp_moments
from mmwave_relq.units import mbps

FIT_FIELDNAMES = [
    "lambda1",
    "lambda2",
    "r1",
    "r2",
    "mean_interarrival",
    "arrival_rate",
    "cov_amplitude",
    "lag1_nacf",
    "cov_canonical",
    "h2_u1",
    "h2_u2",
    "h2_q",
]


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config) if args.config else config_from_mapping({})
    return apply_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        method=getattr(args, "method", None),
        out=args.out,
        jobs=getattr(args, "jobs", None),
    )


def single_point(cfg: ExperimentConfig, method: str) -> ExperimentConfig:
    """Drop the sweep grid: one row at the configured operating point."""
    return cfg.model_copy(update={"sweep": SweepSpec(), "method": method})


def cmd_pmf(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    table = emit_pmf(cfg)
    path = pmf_path(cfg)
    n = write_pmf(table, path)

    summary = table.summary()
    print(
        f"C={mbps(summary['session_rate_bps']):g} Mb/s  mean demand={summary['mean_demand']:.4f} PRB  "
        f"outage={summary['outage_mass']:.6f}  j_max={summary['j_max']}"
    )
    if cfg.demand.source == "radio":
        radio = radio_summary(cfg.radio)
        print(
            f"r_C={radio['coverage_radius_m']:.1f} m  mean blockage={radio['mean_blockage']:.4f}  "
            f"BS gain={radio['bs_gain_db']:.2f} dB  UE gain={radio['ue_gain_db']:.2f} dB"
        )
    print(f"Wrote {n} PMF rows to {path}")
    return 0


def _run_single(args: argparse.Namespace, method: str) -> int:
    cfg = single_point(load_config(args), method)
    rows = run_experiment(cfg, strict=True)
    path = results_path(cfg)
    write_results(rows, path)

    for row in rows:
        ci = f" ±{row.loss_ci:.2e}" if row.loss_ci is not None else ""
        print(
            f"{row.traffic} {row.method}: loss={row.loss_probability:.6g}{ci}  "
            f"utilization={row.utilization:.6g}"
        )
    print(f"Wrote {len(rows)} row(s) to {path}")
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    return _run_single(args, "analytic")


def cmd_simulate(args: argparse.Namespace) -> int:
    return _run_single(args, "sim")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    print(
        f"Sweep '{cfg.name}': {cfg.sweep.parameter} over {len(cfg.grid())} value(s), "
        f"traffic={','.join(cfg.traffic_models())}, method={cfg.method}",
        flush=True,
    )
    rows = run_experiment(cfg)
    path = results_path(cfg)
    write_results(rows, path)

    errors = sum(1 for r in rows if r.status != "ok")
    print(f"Wrote {len(rows)} rows to {path}")
    if errors:
        print(f"Note: {errors} row(s) have error status; see the 'error' column.")
    return 0


def cmd_fit_spp(args: argparse.Namespace) -> int:
    if args.config:
        traffic = load_experiment_config(args.config).traffic
    else:
        traffic = TrafficSpec()
    updates = {
        k: v
        for k, v in {
            "arrival_rate": args.rate,
            "cov": args.cov,
            "cov_convention": args.convention,
            "beta": args.beta,
            "lambda2": args.lambda2,
        }.items()
        if v is not None
    }
    traffic = TrafficSpec.model_validate({**traffic.model_dump(), **updates})

    amplitude = resolve_cov_amplitude(
        traffic.arrival_rate, traffic.cov, traffic.cov_convention, traffic.beta, traffic.lambda2, traffic.lambda2_factor
    )
    spp = fit_spp_search(1.0 / traffic.arrival_rate, amplitude, traffic.beta, traffic.lambda2, traffic.lambda2_factor)
    st = spp_moments(spp)

    print(f"lambda1={spp.lambda1:.10g}  lambda2={spp.lambda2:.10g}  r1={spp.r1:.10g}  r2={spp.r2:.10g}")
    print(
        f"E[X]={st.mean_interarrival:.10g}  rate={st.arrival_rate:.10g}  amplitude={st.cov_amplitude:.10g}  "
        f"beta={st.lag1_nacf:.10g}  canonical CoV={st.cov_canonical:.10g}"
    )

    if args.out:
        row = {
            "lambda1": spp.lambda1,
            "lambda2": spp.lambda2,
            "r1": spp.r1,
            "r2": spp.r2,
            "mean_interarrival": st.mean_interarrival,
            "arrival_rate": st.arrival_rate,
            "cov_amplitude": st.cov_amplitude,
            "lag1_nacf": st.lag1_nacf,
            "cov_canonical": st.cov_canonical,
            "h2_u1": st.h2.u1,
            "h2_u2": st.h2.u2,
            "h2_q": st.h2.q,
        }
        write_csv(args.out, FIT_FIELDNAMES, [{k: format(v, ".12g") for k, v in row.items()}])
        print(f"Wrote fit to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="mmWave resource loss system benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="Experiment config (dotenv syntax)")
        p.add_argument("--out", type=Path, default=None, help="Output CSV path")

    p = sub.add_parser("pmf", help="Emit the PRB demand PMF")
    common(p)
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("solve", help="Analytic metrics at one operating point")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Simulated metrics at one operating point")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="Base RNG seed")
    p.add_argument("--jobs", type=int, default=None, help="Worker processes for replications")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="Run the configured parameter grid")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="Base RNG seed")
    p.add_argument("--method", choices=["analytic", "sim", "both"], default=None)
    p.add_argument("--jobs", type=int, default=None, help="Worker processes for grid points")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-spp", help="Fit a switched Poisson process")
    common(p)
    p.add_argument("--rate", type=float, default=None, help="Arrival rate (1/s)")
    p.add_argument("--cov", type=float, default=None, help="CoV knob")
    p.add_argument("--convention", choices=["rate_scaled", "amplitude", "canonical"], default=None)
    p.add_argument("--beta", type=float, default=None, help="Lag-1 autocorrelation decay")
    p.add_argument("--lambda2", type=float, default=None, help="Free phase-2 rate (1/s)")
    p.set_defaults(func=cmd_fit_spp)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # ConfigError and pydantic's ValidationError are both ValueErrors
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
