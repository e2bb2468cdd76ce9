"""
Per-session PRB demand distribution.

`DemandPmf.p[j]` is the probability that an arriving (non-outage) session asks
for j PRBs. Index 0 is always zero: every session needs at least one PRB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

PMF_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DemandPmf:
    p: np.ndarray
    outage_mass: float = 0.0
    mean_demand: float = field(init=False)
    var_demand: float = field(init=False)

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("demand PMF needs at least one support point j >= 1")
        if p[0] != 0.0:
            raise ValueError(f"p_0 must be 0, got {p[0]}")
        if np.any(p < 0):
            raise ValueError("demand PMF has negative entries")
        total = float(p.sum())
        if abs(total - 1.0) > PMF_SUM_TOL:
            raise ValueError(f"demand PMF sums to {total!r}, expected 1")
        if not 0.0 <= self.outage_mass <= 1.0:
            raise ValueError(f"outage mass {self.outage_mass} outside [0, 1]")

        # trim trailing zeros so j_max is the largest support point
        last = int(np.flatnonzero(p)[-1])
        p = p[: last + 1].copy()
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

        j = np.arange(p.size)
        mean = float(j @ p)
        object.__setattr__(self, "mean_demand", mean)
        object.__setattr__(self, "var_demand", float((j * j) @ p - mean * mean))

    @property
    def j_max(self) -> int:
        return self.p.size - 1

    def pmf(self, j: int) -> float:
        if 0 <= j < self.p.size:
            return float(self.p[j])
        return 0.0

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.p)

    def tail_above(self, prbs: int) -> float:
        """Mass of demands that can never fit into `prbs` PRBs."""
        if prbs + 1 >= self.p.size:
            return 0.0
        return float(self.p[prbs + 1 :].sum())

    def padded(self, prbs: int) -> np.ndarray:
        """p_0..p_R, zero-padded or truncated to length prbs + 1."""
        out = np.zeros(prbs + 1)
        n = min(prbs + 1, self.p.size)
        out[:n] = self.p[:n]
        return out

    @classmethod
    def from_mapping(cls, probs: Mapping[int, float], outage_mass: float = 0.0) -> "DemandPmf":
        if not probs:
            raise ValueError("empty demand mapping")
        if min(probs) < 1:
            raise ValueError("demand support must start at j >= 1")
        p = np.zeros(max(probs) + 1)
        for j, value in probs.items():
            p[int(j)] += float(value)
        return cls(p=p, outage_mass=outage_mass)

    @classmethod
    def deterministic(cls, j: int) -> "DemandPmf":
        return cls.from_mapping({j: 1.0})

    @classmethod
    def geometric(cls, mean: float, tail: float = 1e-15) -> "DemandPmf":
        """
        Geometric demand on j >= 1 with the given mean, truncated where the
        remaining tail drops below `tail` and renormalized.
        """
        if mean < 1.0:
            raise ValueError(f"geometric demand mean must be >= 1, got {mean}")
        if mean == 1.0:
            return cls.deterministic(1)
        rho = 1.0 - 1.0 / mean
        j_max = max(1, math.ceil(math.log(tail) / math.log(rho)))
        j = np.arange(1, j_max + 1)
        p = np.zeros(j_max + 1)
        p[1:] = (1.0 - rho) * rho ** (j - 1)
        p /= p.sum()
        return cls(p=p)
