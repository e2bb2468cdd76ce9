"""
Radio parameterization: from link budget and blockage geometry to the
per-session PRB demand PMF.

Model:
- UE positions uniform in a disk of radius r_C around the BS; 3D distance
  y = sqrt(r^2 + (h_A - h_U)^2).
- Human-body blockage with probability p_B(r) (cylinder blockers).
- 3GPP UMi-style path loss with an extra attenuation in the blocked state.
- Interference, fast-fading and shadow-fading margins applied in dB on top of
  thermal noise, so SINR_i(y) = A_i * y^-zeta.
- r_C is where a blocked UE sits exactly at the outage threshold S_min.

All functions are pure.
"""

from __future__ import annotations

import math
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate

from mmwave_relq.demand import DemandPmf
from mmwave_relq.errors import DegeneratePmfError, InfeasibleConfigurationError
from mmwave_relq.mcs import McsTable
from mmwave_relq.units import db_to_linear, dbm_per_hz_to_watts_per_hz, degrees_to_radians, linear_to_db

BlockageMode = Literal["averaged", "local"]

PATH_LOSS_INTERCEPT_DB = 32.4
HPBW_DEGREES = 102.0
QUAD_EPSABS = 1e-9


class RadioConfig(BaseModel):
    """
    Radio and environment parameters. Defaults are the numerical-study values:
    28 GHz, 100 MHz, 2 W, 16x16 BS array, 4x4 UE array, 0.04 blockers/m^2.

    blocker_speed and blocker_run_time describe blocker mobility; they are
    kept for completeness and do not enter the static blockage model.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    f_c_ghz: float = Field(28.0, gt=0)
    bandwidth_hz: float = Field(100e6, gt=0)
    tx_power_w: float = Field(2.0, gt=0)
    h_bs: float = 10.0
    h_ue: float = 1.5
    h_blocker: float = 1.7
    blocker_radius: float = Field(0.4, ge=0)
    blocker_density: float = Field(0.04, ge=0)
    blocker_speed: float = Field(1.0, ge=0)
    blocker_run_time: float = Field(5.0, ge=0)
    path_loss_exponent: float = Field(2.1, gt=0)
    eps_nonblocked_db: float = 0.0
    eps_blocked_db: float = 15.0
    noise_psd_dbm_hz: float = -174.0
    interference_margin_db: float = Field(3.0, ge=0)
    fast_fading_margin_db: float = Field(3.0, ge=0)
    shadow_fading_margin_db: float = Field(3.0, ge=0)
    s_min_db: float = -9.47
    bs_elements_h: int = Field(16, ge=1)
    bs_elements_v: int = Field(16, ge=1)
    ue_elements_h: int = Field(4, ge=1)
    ue_elements_v: int = Field(4, ge=1)
    prb_bandwidth_hz: float = Field(1.44e6, gt=0)
    guard_band_hz: float = Field(2.48e6, ge=0)

    @model_validator(mode="after")
    def _check_geometry(self) -> "RadioConfig":
        if not self.h_bs > self.h_blocker > self.h_ue > 0:
            raise ValueError(
                f"heights must satisfy h_bs > h_blocker > h_ue > 0, got "
                f"{self.h_bs}, {self.h_blocker}, {self.h_ue}"
            )
        if self.prb_bandwidth_hz > self.bandwidth_hz - 2.0 * self.guard_band_hz:
            raise ValueError("prb_bandwidth_hz cannot exceed the bandwidth left after guard bands")
        return self

    @property
    def height_gap(self) -> float:
        return self.h_bs - self.h_ue

    @property
    def total_margin_db(self) -> float:
        return self.interference_margin_db + self.fast_fading_margin_db + self.shadow_fading_margin_db

    @property
    def usable_prbs(self) -> int:
        """PRBs inside the transmission bandwidth (66 at 100 MHz, 120 kHz SCS)."""
        usable = self.bandwidth_hz - 2.0 * self.guard_band_hz
        return math.floor(round(usable / self.prb_bandwidth_hz, 9))


# --- Blockage ---


def blockage_probability(r: float, cfg: RadioConfig) -> float:
    """Probability that a UE at 2D distance r is blocked by a pedestrian."""
    if r < 0:
        raise ValueError(f"2D distance must be >= 0, got {r}")
    slope = (cfg.h_blocker - cfg.h_ue) / cfg.height_gap
    exponent = 2.0 * cfg.blocker_density * cfg.blocker_radius * (r * slope + cfg.blocker_radius)
    return -math.expm1(-exponent)


def mean_blockage_probability(r_c: float, cfg: RadioConfig) -> float:
    """Blockage probability averaged over UEs uniform in the disk of radius r_c."""
    if r_c <= 0:
        raise ValueError(f"coverage radius must be > 0, got {r_c}")
    if cfg.blocker_density == 0 or cfg.blocker_radius == 0:
        return 0.0
    value, _ = integrate.quad(
        lambda r: blockage_probability(r, cfg) * 2.0 * r / (r_c * r_c),
        0.0,
        r_c,
        epsabs=QUAD_EPSABS,
        limit=200,
    )
    return min(max(value, 0.0), 1.0)


# --- Propagation and antennas ---


def path_loss_db(y: float, blocked: bool, cfg: RadioConfig) -> float:
    if y <= 0:
        raise ValueError(f"3D distance must be > 0, got {y}")
    eps = cfg.eps_blocked_db if blocked else cfg.eps_nonblocked_db
    return (
        PATH_LOSS_INTERCEPT_DB
        + eps
        + 10.0 * cfg.path_loss_exponent * math.log10(y)
        + 20.0 * math.log10(cfg.f_c_ghz)
    )


def _array_factor_ratio(theta: float, n: int) -> float:
    half = math.pi * math.cos(theta) / 2.0
    den = math.sin(half)
    if abs(den) < 1e-12:
        return float(n)
    return math.sin(n * half) / den


def array_gain(n_elements: int) -> float:
    """
    Mean array-factor ratio over the half-power beamwidth (102 deg / n)
    centred at broadside, for one plane of an n-element array.
    """
    if n_elements < 1:
        raise ValueError(f"need at least one antenna element, got {n_elements}")
    if n_elements == 1:
        return 1.0
    hpbw = degrees_to_radians(HPBW_DEGREES / n_elements)
    lo = math.pi / 2.0 - hpbw / 2.0
    hi = math.pi / 2.0 + hpbw / 2.0
    value, _ = integrate.quad(_array_factor_ratio, lo, hi, args=(n_elements,), epsabs=QUAD_EPSABS, limit=200)
    return value / hpbw


def planar_gain(n_h: int, n_v: int) -> float:
    return array_gain(n_h) * array_gain(n_v)


def bs_gain(cfg: RadioConfig) -> float:
    return planar_gain(cfg.bs_elements_h, cfg.bs_elements_v)


def ue_gain(cfg: RadioConfig) -> float:
    return planar_gain(cfg.ue_elements_h, cfg.ue_elements_v)


# --- SINR ---


def noise_power_w(cfg: RadioConfig) -> float:
    """Thermal noise over the band, inflated by the dB margins."""
    return dbm_per_hz_to_watts_per_hz(cfg.noise_psd_dbm_hz) * cfg.bandwidth_hz * db_to_linear(cfg.total_margin_db)


def link_constant(blocked: bool, cfg: RadioConfig) -> float:
    """A_i such that SINR_i(y) = A_i * y^-zeta."""
    received_at_1m = cfg.tx_power_w * bs_gain(cfg) * ue_gain(cfg) * db_to_linear(-path_loss_db(1.0, blocked, cfg))
    return received_at_1m / noise_power_w(cfg)


def distance_3d(r: float, cfg: RadioConfig) -> float:
    return math.hypot(r, cfg.height_gap)


def sinr_at_distance(r: float, blocked: bool, cfg: RadioConfig) -> float:
    """Linear SINR at 2D distance r."""
    if r < 0:
        raise ValueError(f"2D distance must be >= 0, got {r}")
    return link_constant(blocked, cfg) * distance_3d(r, cfg) ** (-cfg.path_loss_exponent)


def sinr_db(r: float, blocked: bool, cfg: RadioConfig) -> float:
    return linear_to_db(sinr_at_distance(r, blocked, cfg))


def coverage_radius(cfg: RadioConfig) -> float:
    """2D radius at which the blocked-state SINR equals S_min."""
    s_min = db_to_linear(cfg.s_min_db)
    edge_3d = (link_constant(True, cfg) / s_min) ** (1.0 / cfg.path_loss_exponent)
    if edge_3d <= cfg.height_gap:
        raise InfeasibleConfigurationError(
            f"blocked link budget reaches S_min={cfg.s_min_db} dB only within "
            f"{edge_3d:.3f} m, below the BS-UE height gap {cfg.height_gap:.3f} m",
            edge_distance_m=edge_3d,
            min_distance_m=cfg.height_gap,
        )
    return math.sqrt(edge_3d * edge_3d - cfg.height_gap * cfg.height_gap)


def _branch_cdf(s: float, a: float, r_c: float, cfg: RadioConfig) -> float:
    """SINR CDF of one blockage state for UEs uniform in the disk."""
    zeta = cfg.path_loss_exponent
    h2 = cfg.height_gap * cfg.height_gap
    q2 = r_c * r_c + h2
    lower = a / q2 ** (zeta / 2.0)
    upper = a / cfg.height_gap**zeta
    if s < lower:
        return 0.0
    if s >= upper:
        return 1.0
    value = (q2 - (a / s) ** (2.0 / zeta)) / (r_c * r_c)
    return min(max(value, 0.0), 1.0)


def _radius_reaching(s: float, a: float, cfg: RadioConfig) -> float:
    """Smallest 2D radius at which SINR a*y^-zeta has dropped to s."""
    y2 = (a / s) ** (2.0 / cfg.path_loss_exponent)
    return math.sqrt(max(0.0, y2 - cfg.height_gap * cfg.height_gap))


def sinr_cdf(s: float, cfg: RadioConfig, r_c: float, blockage: BlockageMode = "averaged") -> float:
    """
    CDF of the linear SINR of a UE uniform in the disk of radius r_c.

    "averaged" mixes the two blockage branches with the spatially averaged
    blockage probability. "local" weights each radius with its own p_B(r).
    """
    if s <= 0:
        raise ValueError(f"linear SINR must be > 0, got {s}")
    if r_c <= 0:
        raise ValueError(f"coverage radius must be > 0, got {r_c}")
    a0 = link_constant(False, cfg)
    a1 = link_constant(True, cfg)

    if blockage == "averaged":
        p_b = mean_blockage_probability(r_c, cfg)
        return (1.0 - p_b) * _branch_cdf(s, a0, r_c, cfg) + p_b * _branch_cdf(s, a1, r_c, cfg)

    if blockage != "local":
        raise ValueError(f"unknown blockage mode {blockage!r}")

    density = lambda r: 2.0 * r / (r_c * r_c)  # noqa: E731
    total = 0.0
    for a, blocked in ((a0, False), (a1, True)):
        start = _radius_reaching(s, a, cfg)
        if start >= r_c:
            continue
        weight = (lambda r: blockage_probability(r, cfg)) if blocked else (lambda r: 1.0 - blockage_probability(r, cfg))
        value, _ = integrate.quad(lambda r: weight(r) * density(r), start, r_c, epsabs=QUAD_EPSABS, limit=200)
        total += value
    return min(max(total, 0.0), 1.0)


# --- Demand PMF ---


def prb_demand(spectral_efficiency, session_rate_bps: float, prb_bandwidth_hz: float):
    """PRBs needed to carry session_rate_bps at the given efficiency (ceil)."""
    ratio = session_rate_bps / (np.asarray(spectral_efficiency, dtype=float) * prb_bandwidth_hz)
    # guard exact integer ratios against float noise
    return np.ceil(np.round(ratio, 9)).astype(int)


def demand_pmf_from_cdf(
    cdf: Callable[[float], float],
    session_rate_bps: float,
    mcs: McsTable,
    prb_bandwidth_hz: float,
) -> DemandPmf:
    """Discretize a SINR CDF through the MCS table into a PRB demand PMF."""
    if session_rate_bps <= 0:
        raise ValueError(f"session rate must be > 0, got {session_rate_bps}")

    thresholds = mcs.thresholds_linear()
    f = np.array([cdf(t) for t in thresholds] + [1.0])
    masses = np.clip(np.diff(f), 0.0, None)
    outage = float(f[0])
    demands = prb_demand(mcs.efficiencies(), session_rate_bps, prb_bandwidth_hz)

    accepted = float(masses.sum())
    if accepted <= 1e-15:
        raise DegeneratePmfError(f"all SINR mass is in outage (outage mass {outage:.6f})", outage_mass=outage)

    p = np.zeros(int(demands.max()) + 1)
    np.add.at(p, demands, masses)
    return DemandPmf(p=p / accepted, outage_mass=outage)


def demand_pmf(
    cfg: RadioConfig,
    session_rate_bps: float,
    mcs: McsTable | None = None,
    r_c: float | None = None,
    blockage: BlockageMode = "averaged",
) -> DemandPmf:
    """
    PRB demand PMF of a session with constant bitrate session_rate_bps.
    r_c defaults to the coverage radius of cfg.
    """
    mcs = mcs or McsTable.default()
    radius = coverage_radius(cfg) if r_c is None else r_c
    p_b = mean_blockage_probability(radius, cfg) if blockage == "averaged" else None
    a0 = link_constant(False, cfg)
    a1 = link_constant(True, cfg)

    if p_b is not None:
        def cdf(s: float) -> float:
            return (1.0 - p_b) * _branch_cdf(s, a0, radius, cfg) + p_b * _branch_cdf(s, a1, radius, cfg)
    else:
        def cdf(s: float) -> float:
            return sinr_cdf(s, cfg, radius, blockage="local")

    return demand_pmf_from_cdf(cdf, session_rate_bps, mcs, cfg.prb_bandwidth_hz)


def sample_sinr(
    cfg: RadioConfig,
    r_c: float,
    n: int,
    rng: np.random.Generator,
    blockage: BlockageMode = "averaged",
) -> np.ndarray:
    """Monte-Carlo UE drops: linear SINR of n UEs uniform in the disk."""
    r = r_c * np.sqrt(rng.random(n))
    y = np.sqrt(r * r + cfg.height_gap**2)
    if blockage == "averaged":
        p_b = np.full(n, mean_blockage_probability(r_c, cfg))
    else:
        slope = (cfg.h_blocker - cfg.h_ue) / cfg.height_gap
        p_b = -np.expm1(-2.0 * cfg.blocker_density * cfg.blocker_radius * (r * slope + cfg.blocker_radius))
    blocked = rng.random(n) < p_b
    a = np.where(blocked, link_constant(True, cfg), link_constant(False, cfg))
    return a * y ** (-cfg.path_loss_exponent)


def empirical_demand_counts(sinr: np.ndarray, session_rate_bps: float, mcs: McsTable, prb_bandwidth_hz: float) -> tuple[np.ndarray, int]:
    """
    Bin linear SINR samples into PRB demands.
    Returns (counts indexed by j, number of outage samples).
    """
    thresholds = mcs.thresholds_linear()
    row = np.searchsorted(thresholds, sinr, side="right") - 1
    in_service = row >= 0
    demands = prb_demand(mcs.efficiencies(), session_rate_bps, prb_bandwidth_hz)
    j = demands[row[in_service]]
    counts = np.bincount(j, minlength=int(demands.max()) + 1)
    return counts, int((~in_service).sum())


def radio_summary(cfg: RadioConfig) -> dict[str, float]:
    r_c = coverage_radius(cfg)
    return {
        "coverage_radius_m": r_c,
        "mean_blockage": mean_blockage_probability(r_c, cfg),
        "bs_gain_db": linear_to_db(bs_gain(cfg)),
        "ue_gain_db": linear_to_db(ue_gain(cfg)),
        "a_nonblocked": link_constant(False, cfg),
        "a_blocked": link_constant(True, cfg),
    }
