"""
Error hierarchy shared by the library and the CLI.

ConfigError covers anything the caller can fix by changing inputs (CLI exit 1).
NumericalError covers failures of the numerics themselves (CLI exit 2).
"""

from __future__ import annotations

from typing import Sequence


class ConfigError(ValueError):
    pass


class InfeasibleConfigurationError(ConfigError):
    """The blocked-state link budget never reaches S_min."""

    def __init__(self, message: str, edge_distance_m: float, min_distance_m: float):
        self.edge_distance_m = edge_distance_m
        self.min_distance_m = min_distance_m
        super().__init__(message)


class DegeneratePmfError(ConfigError):
    def __init__(self, message: str, outage_mass: float):
        self.outage_mass = outage_mass
        super().__init__(message)


class StructuralError(ConfigError):
    """Reducible or otherwise malformed Markov chain."""


class FitInfeasibleError(ConfigError):
    def __init__(self, message: str, violations: Sequence[str] = ()):
        self.violations = tuple(violations)
        detail = f" ({'; '.join(self.violations)})" if self.violations else ""
        super().__init__(f"{message}{detail}")


class DegenerateSystemError(ConfigError):
    pass


class NumericalError(RuntimeError):
    pass


class AssemblyError(NumericalError):
    def __init__(self, message: str, max_row_sum: float):
        self.max_row_sum = max_row_sum
        super().__init__(f"{message} (max |row sum| = {max_row_sum:.3e})")


class SolverError(NumericalError):
    def __init__(self, message: str, residuals: Sequence[float] = ()):
        self.residuals = list(residuals)
        last = f", last residual {self.residuals[-1]:.3e}" if self.residuals else ""
        super().__init__(f"{message}{last}")


class NegativeProbabilityError(NumericalError):
    def __init__(self, message: str, min_value: float, position: int):
        self.min_value = min_value
        self.position = position
        super().__init__(f"{message}: {min_value:.3e} at unknown {position}")
