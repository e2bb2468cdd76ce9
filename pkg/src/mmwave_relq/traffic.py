"""
Session arrival processes.

A MAP is given by (Λ0, Λ1): Λ0 holds phase transitions without an arrival,
Λ1 the transitions that carry one. The two-state switched Poisson process
(SPP) is the special case with diagonal Λ1; it has closed forms for its
interarrival distribution (a two-phase hyperexponential), its mean, its
covariance amplitude and its lag-1 autocorrelation decay, and those closed
forms can be inverted to fit an SPP to measured (mean, amplitude, decay).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy import optimize
from scipy.sparse.csgraph import connected_components

from mmwave_relq.errors import FitInfeasibleError, StructuralError

if TYPE_CHECKING:
    from mmwave_relq.config import TrafficSpec

CovConvention = Literal["rate_scaled", "amplitude", "canonical"]

ROW_SUM_TOL = 1e-12
STATIONARY_RESIDUAL_TOL = 1e-12
LAMBDA2_SCAN_MAX_FACTOR = 100.0
LAMBDA2_SCAN_POINTS = 64


@dataclass(frozen=True, eq=False)
class MapProcess:
    lambda0: np.ndarray
    lambda1: np.ndarray

    def __post_init__(self) -> None:
        l0 = np.atleast_2d(np.asarray(self.lambda0, dtype=float))
        l1 = np.atleast_2d(np.asarray(self.lambda1, dtype=float))
        if l0.shape != l1.shape or l0.shape[0] != l0.shape[1]:
            raise StructuralError(f"Λ0 and Λ1 must be square and equal-sized, got {l0.shape} and {l1.shape}")

        off = l0 - np.diag(np.diag(l0))
        if np.any(l1 < 0):
            raise StructuralError("Λ1 has negative entries")
        if np.any(off < 0):
            raise StructuralError("Λ0 has negative off-diagonal entries")
        if np.any(np.diag(l0) >= 0):
            raise StructuralError("Λ0 diagonal must be strictly negative")
        if not np.any(l1 > 0):
            raise StructuralError("Λ1 is zero: the process never generates an arrival")

        q = l0 + l1
        scale = max(1.0, float(np.abs(l0).max()))
        worst = float(np.abs(q.sum(axis=1)).max())
        if worst > ROW_SUM_TOL * scale:
            raise StructuralError(f"Λ0 + Λ1 rows must sum to zero (worst {worst:.3e})")

        n_components, _ = connected_components(q != 0, directed=True, connection="strong")
        if n_components != 1:
            raise StructuralError(f"phase process is reducible ({n_components} communicating classes)")

        l0.setflags(write=False)
        l1.setflags(write=False)
        object.__setattr__(self, "lambda0", l0)
        object.__setattr__(self, "lambda1", l1)

    @property
    def phases(self) -> int:
        return self.lambda0.shape[0]

    @property
    def generator(self) -> np.ndarray:
        return self.lambda0 + self.lambda1

    @property
    def is_poisson(self) -> bool:
        return self.phases == 1

    @classmethod
    def poisson(cls, rate: float) -> "MapProcess":
        if rate <= 0:
            raise ValueError(f"arrival rate must be > 0, got {rate}")
        return cls(lambda0=np.array([[-rate]]), lambda1=np.array([[rate]]))

    @classmethod
    def from_spp(cls, spp: "SppParams") -> "MapProcess":
        l0 = np.array(
            [
                [-(spp.lambda1 + spp.r1), spp.r1],
                [spp.r2, -(spp.lambda2 + spp.r2)],
            ]
        )
        return cls(lambda0=l0, lambda1=np.diag([spp.lambda1, spp.lambda2]))

    def scaled(self, factor: float) -> "MapProcess":
        """Same correlation structure, all rates multiplied by factor."""
        return MapProcess(lambda0=self.lambda0 * factor, lambda1=self.lambda1 * factor)


@dataclass(frozen=True)
class SppParams:
    """
    Two-state switched Poisson process: arrival rate lambda1 (lambda2) in
    phase 1 (2), leaving phase 1 at rate r1 and phase 2 at rate r2.
    """

    lambda1: float
    lambda2: float
    r1: float
    r2: float
    fitted_from: tuple[float, float, float] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        bad = [name for name in ("lambda1", "lambda2", "r1", "r2") if not getattr(self, name) > 0]
        if bad:
            raise FitInfeasibleError("SPP rates must be strictly positive", [f"{n} <= 0" for n in bad])

    def as_map(self) -> MapProcess:
        return MapProcess.from_spp(self)


@dataclass(frozen=True)
class H2:
    """Survival function q·exp(-u1·x) + (1-q)·exp(-u2·x), u1 <= u2."""

    u1: float
    u2: float
    q: float

    def __post_init__(self) -> None:
        if not 0 < self.u1 <= self.u2:
            raise ValueError(f"H2 rates must satisfy 0 < u1 <= u2, got {self.u1}, {self.u2}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"H2 mixing weight {self.q} outside [0, 1]")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = 1.0 - self.q * np.exp(-self.u1 * x) - (1.0 - self.q) * np.exp(-self.u2 * x)
        return np.where(x < 0, 0.0, out)

    @property
    def mean(self) -> float:
        return self.q / self.u1 + (1.0 - self.q) / self.u2

    @property
    def second_moment(self) -> float:
        return 2.0 * self.q / self.u1**2 + 2.0 * (1.0 - self.q) / self.u2**2

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2


@dataclass(frozen=True)
class SppStats:
    mean_interarrival: float
    arrival_rate: float
    cov_amplitude: float
    lag1_nacf: float
    h2: H2
    variance: float
    cov_canonical: float

    @property
    def lag1_autocovariance(self) -> float:
        return self.cov_amplitude * self.lag1_nacf


# --- General MAP quantities ---


def stationary_distribution(process: MapProcess) -> np.ndarray:
    """Stationary vector θ of the phase generator Q = Λ0 + Λ1."""
    q = process.generator
    m = process.phases
    if m == 1:
        return np.ones(1)
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    try:
        theta = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise StructuralError(f"phase generator is singular beyond rank one: {exc}") from exc
    theta = np.clip(theta, 0.0, None)
    theta /= theta.sum()
    residual = float(np.abs(theta @ q).max())
    if residual > STATIONARY_RESIDUAL_TOL * max(1.0, float(np.abs(q).max())):
        raise StructuralError(f"stationary vector residual {residual:.3e} too large")
    return theta


def arrival_rate(process: MapProcess) -> float:
    theta = stationary_distribution(process)
    return float(theta @ process.lambda1.sum(axis=1))


def _embedded_matrix(process: MapProcess) -> np.ndarray:
    """P = (-Λ0)^-1 Λ1, the phase transition matrix between arrivals."""
    try:
        return np.linalg.solve(-process.lambda0, process.lambda1)
    except np.linalg.LinAlgError as exc:
        raise StructuralError(f"-Λ0 is singular: {exc}") from exc


def embedded_distribution(process: MapProcess) -> np.ndarray:
    """Phase distribution seen just after an arrival."""
    _embedded_matrix(process)
    theta = stationary_distribution(process)
    flow = theta @ process.lambda1
    return flow / flow.sum()


def interarrival_moment(process: MapProcess, k: int) -> float:
    """E[X^k] = k! θ* (-Λ0)^-k 1."""
    if k < 1:
        raise ValueError(f"moment order must be >= 1, got {k}")
    theta_star = embedded_distribution(process)
    v = np.ones(process.phases)
    for _ in range(k):
        v = np.linalg.solve(-process.lambda0, v)
    return math.factorial(k) * float(theta_star @ v)


def scv(process: MapProcess) -> float:
    """Squared coefficient of variation of the stationary interarrival time."""
    m1 = interarrival_moment(process, 1)
    return interarrival_moment(process, 2) / (m1 * m1) - 1.0


def lag_autocovariance(process: MapProcess, lag: int) -> float:
    """Cov(X_0, X_lag) for interarrival times of a stationary MAP."""
    if lag < 0:
        raise ValueError(f"lag must be >= 0, got {lag}")
    m1 = interarrival_moment(process, 1)
    if lag == 0:
        return interarrival_moment(process, 2) - m1 * m1
    theta_star = embedded_distribution(process)
    p = _embedded_matrix(process)
    mean_vec = np.linalg.solve(-process.lambda0, np.ones(process.phases))
    left = np.linalg.solve(-process.lambda0.T, theta_star)
    joint = left @ np.linalg.matrix_power(p, lag) @ mean_vec
    return float(joint) - m1 * m1


# --- SPP closed forms ---


def spp_h2(spp: SppParams) -> H2:
    """Hyperexponential form of the SPP interarrival time distribution."""
    s = spp.lambda1 + spp.lambda2 + spp.r1 + spp.r2
    det = spp.lambda1 * spp.lambda2 + spp.lambda1 * spp.r2 + spp.lambda2 * spp.r1
    delta = math.sqrt((spp.lambda1 - spp.lambda2 + spp.r1 - spp.r2) ** 2 + 4.0 * spp.r1 * spp.r2)
    u2 = (s + delta) / 2.0
    u1 = det / u2

    # density at 0 is the arrival rate seen from the post-arrival phase mix
    w = spp.lambda1 * spp.r2 + spp.lambda2 * spp.r1
    density0 = (spp.lambda1**2 * spp.r2 + spp.lambda2**2 * spp.r1) / w
    q = (u2 - density0) / (u2 - u1)
    return H2(u1=u1, u2=u2, q=min(max(q, 0.0), 1.0))


def spp_moments(spp: SppParams) -> SppStats:
    l1, l2, r1, r2 = spp.lambda1, spp.lambda2, spp.r1, spp.r2
    w = l2 * r1 + l1 * r2
    det = l1 * l2 + l2 * r1 + l1 * r2
    mean = (r1 + r2) / w
    amplitude = (l1 - l2) ** 2 * r1 * r2 / (w * w * det)
    beta = l1 * l2 / det

    h2 = spp_h2(spp)
    variance = max(h2.variance, 0.0)
    return SppStats(
        mean_interarrival=mean,
        arrival_rate=1.0 / mean,
        cov_amplitude=amplitude,
        lag1_nacf=beta,
        h2=h2,
        variance=variance,
        cov_canonical=math.sqrt(variance) / mean,
    )


def fit_spp(mean_interarrival: float, cov_amplitude: float, lag1_nacf: float, lambda2: float) -> SppParams:
    """
    Invert (E[X], amplitude, lag-1 decay) into an SPP with phase-2 rate
    lambda2 fixed. Requires lambda2 > 1/E[X] and 0 < decay < 1.
    """
    e, var, beta = mean_interarrival, cov_amplitude, lag1_nacf
    violations = []
    if not e > 0:
        violations.append(f"mean interarrival {e} <= 0")
    if not 0.0 < beta < 1.0:
        violations.append(f"lag-1 decay {beta} outside (0, 1)")
    if not var > 0:
        violations.append(f"covariance amplitude {var} <= 0")
    if e > 0 and not lambda2 * e > 1.0:
        violations.append(f"lambda2={lambda2} must exceed the arrival rate {1.0 / e}")
    if violations:
        raise FitInfeasibleError("SPP fit preconditions violated", violations)

    d = lambda2 * e - 1.0
    den1 = beta * e * d + lambda2 * var
    den2 = beta * d * d + lambda2 * lambda2 * var
    lambda1 = beta * d / den1
    r1 = (1.0 - beta) * lambda2 * lambda2 * var * d / (den1 * den2)
    r2 = (1.0 - beta) * lambda2 * d * d / den2

    rates = {"lambda1": lambda1, "r1": r1, "r2": r2}
    bad = [f"{name}={value:.6g} <= 0" for name, value in rates.items() if not value > 0 or not math.isfinite(value)]
    if bad:
        raise FitInfeasibleError(f"SPP fit with lambda2={lambda2} gives nonpositive rates", bad)
    return SppParams(lambda1=lambda1, lambda2=lambda2, r1=r1, r2=r2, fitted_from=(e, var, beta))


def fit_spp_search(
    mean_interarrival: float,
    cov_amplitude: float,
    lag1_nacf: float,
    lambda2: float | None = None,
    factor: float = 5.0,
) -> SppParams:
    """
    Fit with lambda2 = factor * arrival rate; on failure scan lambda2
    geometrically over (rate, 100 * rate]. An explicit lambda2 is used as is
    and its fit errors propagate.
    """
    if lambda2 is not None:
        return fit_spp(mean_interarrival, cov_amplitude, lag1_nacf, lambda2)

    rate = 1.0 / mean_interarrival
    try:
        return fit_spp(mean_interarrival, cov_amplitude, lag1_nacf, factor * rate)
    except FitInfeasibleError as exc:
        first_error = exc

    for candidate in np.geomspace(rate * 1.001, rate * LAMBDA2_SCAN_MAX_FACTOR, LAMBDA2_SCAN_POINTS):
        try:
            return fit_spp(mean_interarrival, cov_amplitude, lag1_nacf, float(candidate))
        except FitInfeasibleError:
            continue
    raise FitInfeasibleError(
        "no feasible lambda2 found in the scan range", list(first_error.violations)
    )


def resolve_cov_amplitude(
    rate: float,
    cov: float,
    convention: CovConvention,
    lag1_nacf: float,
    lambda2: float | None = None,
    factor: float = 5.0,
) -> float:
    """
    Covariance amplitude for a CoV knob:
      rate_scaled  amplitude = cov * rate
      amplitude    amplitude = cov
      canonical    amplitude such that std(X) / E[X] of the fitted SPP = cov
    """
    if convention == "rate_scaled":
        return cov * rate
    if convention == "amplitude":
        return cov
    if convention != "canonical":
        raise ValueError(f"unknown CoV convention {convention!r}")

    if cov <= 1.0:
        raise FitInfeasibleError("canonical CoV of an SPP must exceed 1", [f"cov={cov}"])
    mean = 1.0 / rate
    lam2 = lambda2 if lambda2 is not None else factor * rate

    def gap(amplitude: float) -> float:
        return spp_moments(fit_spp(mean, amplitude, lag1_nacf, lam2)).cov_canonical - cov

    lo = 1e-12 * mean * mean
    hi = mean * mean
    for _ in range(60):
        if gap(hi) > 0:
            break
        hi *= 4.0
    else:
        raise FitInfeasibleError("canonical CoV not reachable with this lambda2", [f"cov={cov}", f"lambda2={lam2}"])
    return optimize.brentq(gap, lo, hi, xtol=1e-14 * mean * mean, rtol=1e-12)


def traffic_from_spec(spec: "TrafficSpec") -> tuple[MapProcess, SppParams | None]:
    """Build the arrival process a config asks for. SppParams only for fitted SPPs."""
    if spec.model == "poisson":
        return MapProcess.poisson(spec.arrival_rate), None
    if spec.model == "map":
        process = MapProcess(lambda0=np.array(spec.lambda0), lambda1=np.array(spec.lambda1))
        if not spec.scale_map_to_rate:
            return process, None
        return process.scaled(spec.arrival_rate / arrival_rate(process)), None

    amplitude = resolve_cov_amplitude(
        spec.arrival_rate, spec.cov, spec.cov_convention, spec.beta, spec.lambda2, spec.lambda2_factor
    )
    spp = fit_spp_search(1.0 / spec.arrival_rate, amplitude, spec.beta, spec.lambda2, spec.lambda2_factor)
    return spp.as_map(), spp
