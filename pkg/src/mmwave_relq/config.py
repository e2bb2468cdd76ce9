"""
Experiment configuration.

Config files use dotenv syntax with flat dotted keys:

    radio.blocker_density=0.04
    traffic.model=spp
    sweep.parameter=arrival_rate
    sweep.values=0.01,0.05,0.1

Keys are folded into sections and validated by the pydantic models below.
Every key has a default, so an empty file is the default operating point.
Lists are comma-separated; matrices and explicit PMFs are JSON.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mmwave_relq.errors import ConfigError
from mmwave_relq.radio import BlockageMode, RadioConfig
from mmwave_relq.traffic import CovConvention

TrafficModel = Literal["poisson", "spp", "map"]
Method = Literal["analytic", "sim", "both"]
SweepParameter = Literal[
    "none",
    "arrival_rate",
    "cov",
    "beta",
    "service_rate",
    "blocker_density",
    "session_rate",
    "bs_elements",
]

# sweeps over these change the demand PMF
RADIO_SWEEPS = frozenset({"blocker_density", "session_rate", "bs_elements"})


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _parse_json(value: Any) -> Any:
    if isinstance(value, str):
        try:
            return json.loads(value)
        except json.JSONDecodeError as exc:
            raise ValueError(f"not valid JSON: {exc.msg}") from exc
    return value


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class TrafficSpec(_Section):
    model: TrafficModel = "spp"
    arrival_rate: float = Field(0.1, gt=0)
    cov: float = Field(2.0, gt=0)
    cov_convention: CovConvention = "rate_scaled"
    beta: float = Field(0.1, gt=0, lt=1)
    lambda2: float | None = Field(None, gt=0)
    lambda2_factor: float = Field(5.0, gt=1)
    lambda0: list[list[float]] | None = None
    lambda1: list[list[float]] | None = None
    scale_map_to_rate: bool = False

    @field_validator("lambda0", "lambda1", mode="before")
    @classmethod
    def _parse_matrices(cls, value: Any) -> Any:
        return _parse_json(value)

    @model_validator(mode="after")
    def _check_matrices(self) -> "TrafficSpec":
        if self.model == "map" and (self.lambda0 is None or self.lambda1 is None):
            raise ValueError("traffic.model=map needs traffic.lambda0 and traffic.lambda1")
        return self


class DemandSpec(_Section):
    source: Literal["radio", "geometric", "explicit"] = "radio"
    session_rate_bps: float = Field(10e6, gt=0)
    blockage: BlockageMode = "averaged"
    mcs_table: Path | None = None
    coverage_radius: float | None = Field(None, gt=0)
    mean: float | None = Field(None, ge=1)
    pmf: dict[int, float] | None = None

    @field_validator("pmf", mode="before")
    @classmethod
    def _parse_pmf(cls, value: Any) -> Any:
        return _parse_json(value)

    @model_validator(mode="after")
    def _check_source(self) -> "DemandSpec":
        if self.source == "explicit" and not self.pmf:
            raise ValueError("demand.source=explicit needs demand.pmf")
        return self


class SystemSpec(_Section):
    prbs: int | None = Field(None, ge=1)
    servers: int | None = Field(None, ge=1)
    service_rate: float = Field(1.0 / 30.0, gt=0)


class SweepSpec(_Section):
    parameter: SweepParameter = "none"
    values: list[float] = Field(default_factory=list)
    traffic: list[TrafficModel] = Field(default_factory=list)

    @field_validator("values", "traffic", mode="before")
    @classmethod
    def _parse_lists(cls, value: Any) -> Any:
        return _split_list(value)

    @model_validator(mode="after")
    def _check_grid(self) -> "SweepSpec":
        if self.parameter != "none" and not self.values:
            raise ValueError(f"sweep.parameter={self.parameter} needs a nonempty sweep.values")
        if any(not math.isfinite(v) for v in self.values):
            raise ValueError("sweep.values must be finite")
        return self


class SimSpec(_Section):
    horizon: float = Field(100_000, gt=0)
    horizon_unit: Literal["arrivals", "seconds"] = "arrivals"
    warmup: float = Field(0.1, ge=0, lt=1)
    replications: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)
    trace_limit: int = Field(0, ge=0)
    trace_path: Path | None = None


class OutputSpec(_Section):
    path: Path | None = None
    include_timing: bool = False
    generator_path: Path | None = None


class ExperimentConfig(_Section):
    name: str = "experiment"
    method: Method = "analytic"
    jobs: int | None = Field(None, ge=1)
    radio: RadioConfig = Field(default_factory=RadioConfig)
    traffic: TrafficSpec = Field(default_factory=TrafficSpec)
    demand: DemandSpec = Field(default_factory=DemandSpec)
    system: SystemSpec = Field(default_factory=SystemSpec)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    sim: SimSpec = Field(default_factory=SimSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    def traffic_models(self) -> list[TrafficModel]:
        return list(self.sweep.traffic) or [self.traffic.model]

    def grid(self) -> list[float | None]:
        if self.sweep.parameter == "none":
            return [None]
        return list(self.sweep.values)


def fold_keys(flat: dict[str, str | None]) -> dict[str, Any]:
    """{"radio.f_c_ghz": "28"} -> {"radio": {"f_c_ghz": "28"}}"""
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            raise ConfigError(f"{key}: missing value")
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"{key}: '{part}' is a value, not a section")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(f"{key}: is a section, not a value")
        node[parts[-1]] = value
    return nested


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{key}: {err['msg']}")
    return "; ".join(parts)


def config_from_mapping(data: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc


def load_experiment_config(path: Path) -> ExperimentConfig:
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    cfg = config_from_mapping(fold_keys(dotenv_values(path)))
    table = cfg.demand.mcs_table
    if table is not None and not table.is_absolute():
        cfg = cfg.model_copy(update={"demand": cfg.demand.model_copy(update={"mcs_table": path.parent / table})})
    return cfg


def apply_overrides(
    cfg: ExperimentConfig,
    seed: int | None = None,
    method: Method | None = None,
    out: Path | None = None,
    jobs: int | None = None,
) -> ExperimentConfig:
    """CLI flags win over file values."""
    update: dict[str, Any] = {}
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {seed}")
        update["sim"] = cfg.sim.model_copy(update={"seed": seed})
    if method is not None:
        update["method"] = method
    if out is not None:
        update["output"] = cfg.output.model_copy(update={"path": out})
    if jobs is not None:
        if jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {jobs}")
        update["jobs"] = jobs
    return cfg.model_copy(update=update)


def with_point(cfg: ExperimentConfig, parameter: SweepParameter, value: float | None) -> ExperimentConfig:
    """Copy of cfg with one sweep-grid value applied."""
    if parameter == "none" or value is None:
        return cfg
    if parameter in ("arrival_rate", "cov", "beta"):
        section, field = "traffic", parameter
    elif parameter == "service_rate":
        section, field = "system", "service_rate"
    elif parameter == "blocker_density":
        section, field = "radio", "blocker_density"
    elif parameter == "session_rate":
        section, field = "demand", "session_rate_bps"
    else:
        n = int(value)
        try:
            radio = RadioConfig.model_validate({**cfg.radio.model_dump(), "bs_elements_h": n, "bs_elements_v": n})
        except ValidationError as exc:
            raise ConfigError(f"sweep value {value} for {parameter}: {_format_validation_error(exc)}") from exc
        return cfg.model_copy(update={"radio": radio})

    current = getattr(cfg, section)
    try:
        updated = type(current).model_validate({**current.model_dump(), field: value})
    except ValidationError as exc:
        raise ConfigError(f"sweep value {value} for {parameter}: {_format_validation_error(exc)}") from exc
    return cfg.model_copy(update={section: updated})
