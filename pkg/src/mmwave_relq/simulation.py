"""
Discrete-event simulation of the loss system with per-session PRB bookkeeping.

Unlike the analytic model, every admitted session holds exactly the PRBs it
asked for and returns exactly those on departure. Arrivals come from the MAP
phase process itself (competing exponential clocks per phase). simpy orders
simultaneous events by scheduling sequence, so runs are reproducible.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import simpy
from scipy import stats

from mmwave_relq.errors import ConfigError
from mmwave_relq.results import write_csv
from mmwave_relq.solver import Metrics, SystemConfig
from mmwave_relq.traffic import MapProcess, embedded_distribution, stationary_distribution

HorizonUnit = Literal["arrivals", "seconds"]

CONFIDENCE = 0.95

TRACE_FIELDNAMES = ["time", "event_type", "phase", "in_service", "occupied_prbs"]


@dataclass(frozen=True, eq=False)
class SimConfig:
    system: SystemConfig
    horizon: float
    horizon_unit: HorizonUnit = "arrivals"
    warmup: float = 0.1
    seed: int = 0
    replications: int = 20
    jobs: int = 1
    trace_limit: int = 0

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ConfigError(f"simulation horizon must be > 0, got {self.horizon}")
        if not 0.0 <= self.warmup < 1.0:
            raise ConfigError(f"warmup fraction must be in [0, 1), got {self.warmup}")
        if self.replications < 1:
            raise ConfigError(f"need at least one replication, got {self.replications}")
        if self.horizon_unit not in ("arrivals", "seconds"):
            raise ConfigError(f"unknown horizon unit {self.horizon_unit!r}")
        if self.horizon_unit == "arrivals" and int(self.horizon) - int(self.warmup * self.horizon) < 1:
            raise ConfigError(
                f"horizon of {int(self.horizon)} arrivals leaves nothing after a {self.warmup:.0%} warmup"
            )


@dataclass(frozen=True)
class ReplicationResult:
    offered: int
    accepted: int
    occupied_time: float
    observed_time: float
    prbs: int
    trace: tuple[dict[str, Any], ...] = field(default=(), compare=False)

    @property
    def loss_probability(self) -> float:
        return 1.0 - self.accepted / self.offered if self.offered else 0.0

    @property
    def utilization(self) -> float:
        if self.observed_time <= 0:
            return 0.0
        return self.occupied_time / (self.prbs * self.observed_time)


@dataclass(frozen=True)
class SimReport:
    loss_probability: float
    loss_ci: float
    utilization: float
    utilization_ci: float
    offered: int
    accepted: int
    replication_loss: tuple[float, ...]
    replication_utilization: tuple[float, ...]
    trace: tuple[dict[str, Any], ...] = field(default=(), compare=False, repr=False)

    def to_metrics(self) -> Metrics:
        return Metrics(
            loss_probability=self.loss_probability,
            utilization=self.utilization,
            method="simulated",
            loss_ci=self.loss_ci,
            utilization_ci=self.utilization_ci,
        )


def _cumulative_rows(process: MapProcess) -> tuple[np.ndarray, np.ndarray]:
    """
    Per phase: total exit rate and the cumulative jump distribution over
    2M targets (first M without arrival, last M with one).
    """
    l0 = np.array(process.lambda0)
    exit_rates = -np.diag(l0).copy()
    np.fill_diagonal(l0, 0.0)
    jumps = np.hstack([l0, process.lambda1]) / exit_rates[:, None]
    cumulative = np.cumsum(jumps, axis=1)
    cumulative[:, -1] = 1.0
    return exit_rates, cumulative


def _draw(cumulative: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(cumulative, rng.random(), side="right"))


class LossSystemSimulation:
    """One replication: N servers and R PRBs as simpy Resource and Container."""

    def __init__(self, cfg: SimConfig, rng: np.random.Generator, trace_limit: int = 0):
        self.cfg = cfg
        self.system = cfg.system
        self.rng = rng
        self.trace_limit = trace_limit
        self.trace: list[dict[str, Any]] = []

        self.env = simpy.Environment()
        self.servers = simpy.Resource(self.env, capacity=self.system.servers)
        self.prbs = simpy.Container(self.env, capacity=self.system.prbs, init=self.system.prbs)
        self.finished = self.env.event()

        self.exit_rates, self.jumps = _cumulative_rows(self.system.arrivals)
        self.demand_cdf = np.cumsum(self.system.pmf.p)
        self.demand_cdf[-1] = 1.0
        self.mean_holding = 1.0 / self.system.service_rate

        if cfg.horizon_unit == "arrivals":
            self.total_arrivals = int(cfg.horizon)
            self.warmup_arrivals = int(cfg.warmup * cfg.horizon)
            self.warmup_time: float | None = None if self.warmup_arrivals else 0.0
        else:
            self.total_arrivals = None
            self.warmup_arrivals = None
            self.warmup_time = cfg.warmup * cfg.horizon

        self.phase = 0
        self.arrivals_seen = 0
        self.offered = 0
        self.accepted = 0
        self.allocated = 0
        self.occupied_time = 0.0
        self.last_change = 0.0

    @property
    def occupied(self) -> int:
        return int(self.system.prbs - self.prbs.level)

    def _observing(self) -> bool:
        return self.warmup_time is not None and self.env.now >= self.warmup_time

    def _accumulate(self) -> None:
        """Integrate occupied PRBs up to now, from the end of warmup on."""
        now = self.env.now
        if self.warmup_time is not None:
            start = max(self.last_change, self.warmup_time)
            if now > start:
                self.occupied_time += self.occupied * (now - start)
        self.last_change = now

    def _record(self, event_type: str) -> None:
        if len(self.trace) < self.trace_limit:
            self.trace.append(
                {
                    "time": f"{self.env.now:.9f}",
                    "event_type": event_type,
                    "phase": self.phase,
                    "in_service": self.servers.count,
                    "occupied_prbs": self.occupied,
                }
            )

    def session(self, demand: int, request: simpy.resources.resource.Request):
        yield self.env.timeout(self.rng.exponential(self.mean_holding))
        self._accumulate()
        self.servers.release(request)
        self.prbs.put(demand)
        self.allocated -= demand
        self._record("departure")

    def on_arrival(self) -> None:
        self.arrivals_seen += 1
        if self.warmup_arrivals is None:
            counted = self._observing()
        else:
            counted = self.arrivals_seen > self.warmup_arrivals
            if self.arrivals_seen == self.warmup_arrivals:
                self.warmup_time = self.env.now
                self.last_change = self.env.now

        demand = int(np.searchsorted(self.demand_cdf, self.rng.random(), side="right"))
        admit = self.servers.count < self.system.servers and self.prbs.level >= demand
        if counted:
            self.offered += 1
        if admit:
            self._accumulate()
            request = self.servers.request()
            self.prbs.get(demand)
            self.allocated += demand
            if counted:
                self.accepted += 1
            self.env.process(self.session(demand, request))
        self._record("arrival_accepted" if admit else "arrival_lost")

        if self.total_arrivals is not None and self.arrivals_seen >= self.total_arrivals:
            self.finished.succeed()

    def arrival_process(self):
        theta = stationary_distribution(self.system.arrivals)
        self.phase = _draw(np.cumsum(theta), self.rng)
        m = self.system.arrivals.phases
        while True:
            yield self.env.timeout(self.rng.exponential(1.0 / self.exit_rates[self.phase]))
            target = _draw(self.jumps[self.phase], self.rng)
            if target >= m:
                self.phase = target - m
                self.on_arrival()
                if self.finished.triggered:
                    return
            else:
                self.phase = target
                self._record("phase")

    def run(self) -> ReplicationResult:
        self.env.process(self.arrival_process())
        if self.total_arrivals is not None:
            self.env.run(until=self.finished)
        else:
            self.env.run(until=self.cfg.horizon)
        self._accumulate()

        if self.allocated != self.occupied:
            raise RuntimeError(f"PRB accounting drifted: {self.allocated} allocated vs {self.occupied} occupied")

        start = self.warmup_time if self.warmup_time is not None else self.env.now
        return ReplicationResult(
            offered=self.offered,
            accepted=self.accepted,
            occupied_time=self.occupied_time,
            observed_time=self.env.now - start,
            prbs=self.system.prbs,
            trace=tuple(self.trace),
        )


def run_replication(cfg: SimConfig, seed: np.random.SeedSequence, trace_limit: int = 0) -> ReplicationResult:
    return LossSystemSimulation(cfg, np.random.default_rng(seed), trace_limit).run()


def confidence_half_width(values: np.ndarray, confidence: float = CONFIDENCE) -> float:
    """Student-t half-width of the mean; infinite for a single value."""
    n = values.size
    if n < 2:
        return float("inf")
    t = stats.t.ppf(0.5 + confidence / 2.0, df=n - 1)
    return float(t * values.std(ddof=1) / np.sqrt(n))


def simulate(cfg: SimConfig) -> SimReport:
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    limits = [cfg.trace_limit] + [0] * (cfg.replications - 1)

    if cfg.jobs > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_replication, [cfg] * cfg.replications, seeds, limits))
    else:
        results = [run_replication(cfg, s, lim) for s, lim in zip(seeds, limits)]

    loss = np.array([r.loss_probability for r in results])
    util = np.array([r.utilization for r in results])
    return SimReport(
        loss_probability=float(np.clip(loss.mean(), 0.0, 1.0)),
        loss_ci=confidence_half_width(loss),
        utilization=float(np.clip(util.mean(), 0.0, 1.0)),
        utilization_ci=confidence_half_width(util),
        offered=sum(r.offered for r in results),
        accepted=sum(r.accepted for r in results),
        replication_loss=tuple(float(v) for v in loss),
        replication_utilization=tuple(float(v) for v in util),
        trace=results[0].trace,
    )


def sample_map_interarrivals(process: MapProcess, n: int, rng: np.random.Generator) -> np.ndarray:
    """n consecutive interarrival times of a stationary MAP, started at an arrival."""
    exit_rates, jumps = _cumulative_rows(process)
    m = process.phases
    phase = _draw(np.cumsum(embedded_distribution(process)), rng)
    out = np.empty(n)
    for i in range(n):
        elapsed = 0.0
        while True:
            elapsed += rng.exponential(1.0 / exit_rates[phase])
            target = _draw(jumps[phase], rng)
            if target >= m:
                phase = target - m
                break
            phase = target
        out[i] = elapsed
    return out


def write_event_trace(rows: tuple[dict[str, Any], ...] | list[dict[str, Any]], path: Path) -> int:
    return write_csv(path, TRACE_FIELDNAMES, rows)
