"""
Config-driven experiments: one row per (grid point, traffic model, method).

Grid points are independent; with jobs > 1 they run on a process pool and the
rows are collected back in grid order, so the CSV does not depend on worker
scheduling. Demand PMFs are cached by radio parameters, so sweeps that leave
the radio alone reuse one PMF.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np

from mmwave_relq.config import ExperimentConfig, TrafficModel, with_point
from mmwave_relq.demand import DemandPmf
from mmwave_relq.errors import ConfigError, NumericalError
from mmwave_relq.mcs import McsTable, load_mcs_table
from mmwave_relq.paths import PMF_DIR, RESULTS_DIR, TRACES_DIR, default_jobs
from mmwave_relq.radio import BlockageMode, RadioConfig, coverage_radius, demand_pmf
from mmwave_relq.results import write_csv
from mmwave_relq.simulation import SimConfig, simulate, write_event_trace
from mmwave_relq.solver import Metrics, SystemConfig, evaluate
from mmwave_relq.traffic import SppParams, traffic_from_spec

FLOAT_FORMAT = ".12g"

FIELDNAMES = [
    "name",
    "point",
    "sweep_parameter",
    "sweep_value",
    "traffic",
    "method",
    "arrival_rate",
    "cov",
    "cov_convention",
    "beta",
    "lambda1",
    "lambda2",
    "r1",
    "r2",
    "service_rate",
    "blocker_density",
    "session_rate_bps",
    "servers",
    "prbs",
    "coverage_radius_m",
    "outage_mass",
    "mean_demand",
    "loss_probability",
    "utilization",
    "residual",
    "loss_ci",
    "utilization_ci",
    "status",
    "error",
    "wall_time_ms",
]

PMF_FIELDNAMES = ["j", "p_j", "cdf"]


def _fmt(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return value


@dataclass(frozen=True)
class ResultRow:
    name: str
    point: int
    sweep_parameter: str
    sweep_value: float | None
    traffic: str
    method: str
    arrival_rate: float
    cov: float | None
    cov_convention: str
    beta: float | None
    lambda1: float | None
    lambda2: float | None
    r1: float | None
    r2: float | None
    service_rate: float
    blocker_density: float
    session_rate_bps: float
    servers: int | None
    prbs: int | None
    coverage_radius_m: float | None
    outage_mass: float | None
    mean_demand: float | None
    loss_probability: float | None = None
    utilization: float | None = None
    residual: float | None = None
    loss_ci: float | None = None
    utilization_ci: float | None = None
    status: str = "ok"
    error: str = ""
    wall_time_ms: float | None = None

    def to_csv_row(self) -> dict[str, Any]:
        return {k: _fmt(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class DemandResult:
    pmf: DemandPmf
    coverage_radius_m: float | None


# --- Demand ---


@lru_cache(maxsize=64)
def radio_demand(
    radio: RadioConfig,
    session_rate_bps: float,
    blockage: BlockageMode,
    mcs_table: Path | None,
    radius: float | None,
) -> DemandResult:
    mcs = load_mcs_table(mcs_table) if mcs_table is not None else McsTable.default()
    r_c = radius if radius is not None else coverage_radius(radio)
    return DemandResult(demand_pmf(radio, session_rate_bps, mcs, r_c, blockage), r_c)


def build_demand(cfg: ExperimentConfig) -> DemandResult:
    spec = cfg.demand
    if spec.source == "explicit":
        try:
            return DemandResult(DemandPmf.from_mapping(spec.pmf or {}), None)
        except ValueError as exc:
            raise ConfigError(f"demand.pmf: {exc}") from exc

    if spec.source == "geometric" and spec.mean is not None:
        return DemandResult(DemandPmf.geometric(spec.mean), None)

    radio = radio_demand(cfg.radio, spec.session_rate_bps, spec.blockage, spec.mcs_table, spec.coverage_radius)
    if spec.source == "geometric":
        # same mean as the radio-derived PMF
        return DemandResult(DemandPmf.geometric(radio.pmf.mean_demand), radio.coverage_radius_m)
    return radio


def build_system(cfg: ExperimentConfig, pmf: DemandPmf, model: TrafficModel) -> tuple[SystemConfig, SppParams | None]:
    traffic = cfg.traffic.model_copy(update={"model": model})
    process, spp = traffic_from_spec(traffic)
    prbs = cfg.system.prbs or cfg.radio.usable_prbs
    servers = cfg.system.servers or prbs
    try:
        system = SystemConfig(
            servers=servers,
            prbs=prbs,
            service_rate=cfg.system.service_rate,
            pmf=pmf,
            arrivals=process,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return system, spp


def derive_seed(base: int, *keys: int) -> int:
    """Independent per-(point, traffic) seed derived from the base seed."""
    return int(np.random.SeedSequence([base, *keys]).generate_state(1)[0])


# --- Rows ---


def _base_row(cfg: ExperimentConfig, point: int, value: float | None, model: TrafficModel) -> dict[str, Any]:
    fitted = model == "spp"
    return {
        "name": cfg.name,
        "point": point,
        "sweep_parameter": cfg.sweep.parameter,
        "sweep_value": value,
        "traffic": model,
        "arrival_rate": cfg.traffic.arrival_rate,
        "cov": cfg.traffic.cov if fitted else None,
        "cov_convention": cfg.traffic.cov_convention if fitted else "",
        "beta": cfg.traffic.beta if fitted else None,
        "lambda1": None,
        "lambda2": None,
        "r1": None,
        "r2": None,
        "service_rate": cfg.system.service_rate,
        "blocker_density": cfg.radio.blocker_density,
        "session_rate_bps": cfg.demand.session_rate_bps,
        "servers": None,
        "prbs": None,
        "coverage_radius_m": None,
        "outage_mass": None,
        "mean_demand": None,
    }


def _methods(cfg: ExperimentConfig) -> list[str]:
    if cfg.method == "both":
        return ["analytic", "sim"]
    return [cfg.method]


def _metrics_row(base: dict[str, Any], method: str, metrics: Metrics, elapsed_ms: float | None) -> ResultRow:
    return ResultRow(
        **base,
        method=method,
        loss_probability=metrics.loss_probability,
        utilization=metrics.utilization,
        residual=metrics.residual,
        loss_ci=metrics.loss_ci,
        utilization_ci=metrics.utilization_ci,
        wall_time_ms=elapsed_ms,
    )


def evaluate_point(cfg: ExperimentConfig, point: int, value: float | None, strict: bool = False, sim_jobs: int = 1) -> list[ResultRow]:
    """All rows for one grid value. Config and numerical failures become error rows unless strict."""
    rows: list[ResultRow] = []
    timing = cfg.output.include_timing

    for t_index, model in enumerate(cfg.traffic_models()):
        base = _base_row(cfg, point, value, model)
        done: list[str] = []
        try:
            point_cfg = with_point(cfg, cfg.sweep.parameter, value)
            base = _base_row(point_cfg, point, value, model)
            demand = build_demand(point_cfg)
            base.update(
                coverage_radius_m=demand.coverage_radius_m,
                outage_mass=demand.pmf.outage_mass,
                mean_demand=demand.pmf.mean_demand,
            )
            system, spp = build_system(point_cfg, demand.pmf, model)
            base.update(servers=system.servers, prbs=system.prbs)
            if spp is not None:
                base.update(lambda1=spp.lambda1, lambda2=spp.lambda2, r1=spp.r1, r2=spp.r2)

            first = point == 0 and t_index == 0
            for method in _methods(point_cfg):
                started = time.perf_counter()
                if method == "analytic":
                    dump = point_cfg.output.generator_path if first else None
                    _, _, metrics = evaluate(system, generator_path=dump)
                else:
                    report = simulate(
                        SimConfig(
                            system=system,
                            horizon=point_cfg.sim.horizon,
                            horizon_unit=point_cfg.sim.horizon_unit,
                            warmup=point_cfg.sim.warmup,
                            seed=derive_seed(point_cfg.sim.seed, point, t_index),
                            replications=point_cfg.sim.replications,
                            jobs=sim_jobs,
                            trace_limit=point_cfg.sim.trace_limit if first else 0,
                        )
                    )
                    if first and point_cfg.sim.trace_limit:
                        trace_path = point_cfg.sim.trace_path or TRACES_DIR / f"{point_cfg.name}.csv"
                        write_event_trace(report.trace, trace_path)
                    metrics = report.to_metrics()
                elapsed = (time.perf_counter() - started) * 1000.0 if timing else None
                rows.append(_metrics_row(base, method, metrics, elapsed))
                done.append(method)
        except (ConfigError, NumericalError) as exc:
            if strict:
                raise
            # methods that already produced a row keep it
            for method in _methods(cfg):
                if method in done:
                    continue
                rows.append(ResultRow(**base, method=method, status="error", error=f"{type(exc).__name__}: {exc}"))
    return rows


def run_experiment(cfg: ExperimentConfig, strict: bool = False) -> list[ResultRow]:
    grid = cfg.grid()
    jobs = cfg.jobs or default_jobs()

    if jobs > 1 and len(grid) > 1:
        n = len(grid)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(evaluate_point, [cfg] * n, range(n), grid, [strict] * n))
    else:
        chunks = [evaluate_point(cfg, i, v, strict, sim_jobs=jobs) for i, v in enumerate(grid)]
    return [row for chunk in chunks for row in chunk]


def results_path(cfg: ExperimentConfig) -> Path:
    return cfg.output.path or RESULTS_DIR / f"{cfg.name}.csv"


def write_results(rows: list[ResultRow], path: Path) -> int:
    return write_csv(path, FIELDNAMES, (row.to_csv_row() for row in rows))


# --- PMF table ---


@dataclass(frozen=True)
class PmfTable:
    demand: DemandResult
    session_rate_bps: float

    def rows(self) -> list[dict[str, Any]]:
        p = self.demand.pmf.p
        cdf = np.cumsum(p)
        return [{"j": j, "p_j": _fmt(p[j]), "cdf": _fmt(min(cdf[j], 1.0))} for j in range(1, p.size)]

    def summary(self) -> dict[str, Any]:
        pmf = self.demand.pmf
        return {
            "session_rate_bps": self.session_rate_bps,
            "coverage_radius_m": self.demand.coverage_radius_m,
            "outage_mass": pmf.outage_mass,
            "mean_demand": pmf.mean_demand,
            "var_demand": pmf.var_demand,
            "j_max": pmf.j_max,
        }


def emit_pmf(cfg: ExperimentConfig) -> PmfTable:
    return PmfTable(demand=build_demand(cfg), session_rate_bps=cfg.demand.session_rate_bps)


def pmf_path(cfg: ExperimentConfig) -> Path:
    return cfg.output.path or PMF_DIR / f"{cfg.name}.csv"


def write_pmf(table: PmfTable, path: Path) -> int:
    comments = [f"{k}={_fmt(v)}" for k, v in table.summary().items()]
    return write_csv(path, PMF_FIELDNAMES, table.rows(), comments=comments)
