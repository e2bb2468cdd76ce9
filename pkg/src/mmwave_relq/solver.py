"""
Resource loss system with MAP arrivals, solved as a level-structured Markov
chain.

State: (k, r, m) = (sessions in service, occupied PRBs, arrival phase).
Per-session allocations are not tracked: on a departure from (k, r) the
released amount j is drawn with probability p_j p^(k-1)_{r-j} / p^(k)_r, where
p^(k) is the k-fold convolution of the demand PMF. Under Poisson arrivals this
keeps the stationary distribution of (k, r) exact.

Global ordering is level-major, r ascending within a level, phase ascending
within (k, r). Level 0 is the single state (0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.sparse as sp
from pyamg.relaxation.relaxation import gauss_seidel
from scipy.sparse.linalg import spsolve

from mmwave_relq.demand import DemandPmf
from mmwave_relq.errors import AssemblyError, DegenerateSystemError, NegativeProbabilityError, SolverError
from mmwave_relq.results import atomic_write_text
from mmwave_relq.traffic import MapProcess, arrival_rate

SolveMethod = Literal["auto", "direct", "gauss-seidel"]

ROW_SUM_TOL = 1e-12
NEGATIVE_CLAMP_TOL = 1e-14
RESIDUAL_TOL = 1e-10
DENSE_LIMIT = 2_000
SPARSE_DIRECT_LIMIT = 400_000
GS_TOL = 1e-12
GS_MAX_SWEEPS = 1_000_000
GS_CHECK_EVERY = 10


@dataclass(frozen=True, eq=False)
class SystemConfig:
    servers: int
    prbs: int
    service_rate: float
    pmf: DemandPmf
    arrivals: MapProcess

    def __post_init__(self) -> None:
        if self.servers < 1:
            raise ValueError(f"need at least one server, got {self.servers}")
        if self.prbs < 1:
            raise ValueError(f"need at least one PRB, got {self.prbs}")
        if not self.service_rate > 0:
            raise ValueError(f"service rate must be > 0, got {self.service_rate}")


@dataclass(frozen=True, eq=False)
class StateSpace:
    """
    levels[k] holds the occupied-PRB values r of S_k in ascending order.
    convolution[k, r] is p^(k)_r for 0 <= k <= N and 0 <= r <= R.
    """

    convolution: np.ndarray
    levels: tuple[np.ndarray, ...]
    phases: int
    offsets: np.ndarray = field(init=False)
    state_k: np.ndarray = field(init=False)
    state_r: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        sizes = np.array([lvl.size for lvl in self.levels])
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "state_k", np.repeat(np.arange(len(self.levels)), sizes))
        object.__setattr__(self, "state_r", np.concatenate(self.levels))

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    @property
    def n_states(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_unknowns(self) -> int:
        return self.n_states * self.phases

    def size(self, k: int) -> int:
        if 0 <= k <= self.max_level:
            return int(self.levels[k].size)
        return 0

    def index(self, k: int, r: int) -> int:
        """1-based position of (k, r) within S_k, 0 when (k, r) is not a state."""
        if not 0 <= k <= self.max_level:
            return 0
        rs = self.levels[k]
        i = int(np.searchsorted(rs, r))
        if i < rs.size and rs[i] == r:
            return i + 1
        return 0

    def position(self, k: int, r: int) -> int:
        """0-based global state number of (k, r), -1 when absent."""
        i = self.index(k, r)
        return int(self.offsets[k]) + i - 1 if i else -1


@dataclass(frozen=True, eq=False)
class QbdSolution:
    """probabilities[s, m] is q_{k,r}(m) for global state s = position(k, r)."""

    space: StateSpace
    probabilities: np.ndarray
    residual: float
    solver_tag: str
    sweeps: int = 0

    @property
    def level0(self) -> np.ndarray:
        return self.probabilities[0]

    def at(self, k: int, r: int) -> np.ndarray:
        s = self.space.position(k, r)
        if s < 0:
            return np.zeros(self.space.phases)
        return self.probabilities[s]

    def level_marginal(self) -> np.ndarray:
        """P(k sessions in service) for k = 0..max_level."""
        return np.bincount(self.space.state_k, weights=self.probabilities.sum(axis=1))


@dataclass(frozen=True)
class Metrics:
    loss_probability: float
    utilization: float
    method: str
    residual: float | None = None
    loss_ci: float | None = None
    utilization_ci: float | None = None


# --- State space ---


def convolve_demands(pmf: DemandPmf, servers: int, prbs: int) -> np.ndarray:
    """Table of k-fold convolutions p^(k)_r, k = 0..servers, r = 0..prbs."""
    p = pmf.padded(prbs)
    table = np.zeros((servers + 1, prbs + 1))
    table[0, 0] = 1.0
    for k in range(1, servers + 1):
        table[k] = np.convolve(table[k - 1], p)[: prbs + 1]
    return table


def build_state_space(cfg: SystemConfig) -> StateSpace:
    conv = convolve_demands(cfg.pmf, cfg.servers, cfg.prbs)
    levels = [np.array([0])]
    for k in range(1, cfg.servers + 1):
        rs = np.flatnonzero(conv[k] > 0)
        if rs.size == 0:
            break
        levels.append(rs)
    if len(levels) == 1:
        raise DegenerateSystemError(
            f"every demand exceeds the {cfg.prbs} available PRBs; no session can be admitted"
        )
    return StateSpace(convolution=conv, levels=tuple(levels), phases=cfg.arrivals.phases)


# --- Generator ---


def acceptance_probabilities(cfg: SystemConfig, space: StateSpace) -> np.ndarray:
    """Per state: probability that an arriving demand fits (0 at level N)."""
    cumulative = np.cumsum(cfg.pmf.padded(cfg.prbs))
    acc = cumulative[cfg.prbs - space.state_r]
    acc[space.state_k >= cfg.servers] = 0.0
    return acc


def arrival_weights(cfg: SystemConfig, space: StateSpace, k: int) -> np.ndarray:
    """W[a, b] = p_{s_b - r_a} for a move from S_k to S_{k+1}."""
    p = cfg.pmf.padded(cfg.prbs)
    gap = space.levels[k + 1][None, :] - space.levels[k][:, None]
    valid = (gap >= 1) & (gap <= cfg.prbs)
    return np.where(valid, p[np.clip(gap, 0, cfg.prbs)], 0.0)


def release_weights(cfg: SystemConfig, space: StateSpace, k: int) -> np.ndarray:
    """W[a, b] = p_{r_a - s_b} p^(k-1)_{s_b} / p^(k)_{r_a}; rows sum to 1."""
    p = cfg.pmf.padded(cfg.prbs)
    upper = space.levels[k]
    lower = space.levels[k - 1]
    gap = upper[:, None] - lower[None, :]
    valid = (gap >= 1) & (gap <= cfg.prbs)
    numer = np.where(valid, p[np.clip(gap, 0, cfg.prbs)] * space.convolution[k - 1, lower][None, :], 0.0)
    return numer / space.convolution[k, upper][:, None]


def assemble_generator(cfg: SystemConfig, space: StateSpace) -> sp.csr_matrix:
    m = space.phases
    q_phase = sp.csr_matrix(cfg.arrivals.generator)
    l1 = sp.csr_matrix(cfg.arrivals.lambda1)
    mu = cfg.service_rate
    acc = acceptance_probabilities(cfg, space)

    n_levels = space.max_level + 1
    blocks: list[list[sp.spmatrix | None]] = [[None] * n_levels for _ in range(n_levels)]
    for k in range(n_levels):
        s = space.size(k)
        lo = int(space.offsets[k])
        blocks[k][k] = (
            sp.kron(sp.identity(s), q_phase)
            - k * mu * sp.identity(s * m)
            - sp.kron(sp.diags(acc[lo : lo + s]), l1)
        )
        if k + 1 < n_levels:
            blocks[k][k + 1] = sp.kron(sp.csr_matrix(arrival_weights(cfg, space, k)), l1)
        if k >= 1:
            blocks[k][k - 1] = sp.kron(sp.csr_matrix(k * mu * release_weights(cfg, space, k)), sp.identity(m))

    g = sp.bmat(blocks, format="csr")

    scale = max(1.0, float(np.abs(g.diagonal()).max()))
    worst = float(np.abs(np.asarray(g.sum(axis=1)).ravel()).max())
    if worst > ROW_SUM_TOL * scale:
        raise AssemblyError("generator rows do not sum to zero", max_row_sum=worst)
    off = g - sp.diags(g.diagonal())
    if off.nnz and off.data.min() < 0:
        raise AssemblyError("generator has negative off-diagonal rates", max_row_sum=worst)
    return g


# --- Solve ---


def _solve_direct(g: sp.csr_matrix) -> np.ndarray:
    n = g.shape[0]
    b = np.zeros(n)
    b[0] = 1.0
    if n < DENSE_LIMIT:
        a = g.T.toarray()
        a[0, :] = 1.0
        try:
            return np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"dense solve failed: {exc}") from exc

    gt = g.T.tocsr()
    a = sp.vstack([sp.csr_matrix(np.ones((1, n))), gt[1:]], format="csc")
    x = spsolve(a, b)
    if not np.all(np.isfinite(x)):
        raise SolverError("sparse direct solve returned non-finite values")
    return x


def _solve_gauss_seidel(g: sp.csr_matrix, tol: float, max_sweeps: int) -> tuple[np.ndarray, int]:
    """Gauss-Seidel on G^T x = 0, renormalized every few sweeps."""
    a = g.T.tocsr()
    n = a.shape[0]
    x = np.full(n, 1.0 / n)
    b = np.zeros(n)
    history: list[float] = []
    sweeps = 0
    while sweeps < max_sweeps:
        prev = x.copy()
        gauss_seidel(a, x, b, iterations=GS_CHECK_EVERY, sweep="forward")
        sweeps += GS_CHECK_EVERY
        total = x.sum()
        if not np.isfinite(total) or total <= 0:
            raise SolverError("Gauss-Seidel iterate degenerated", residuals=history)
        x /= total
        change = float(np.abs(x - prev).max() / np.abs(x).max())
        history.append(change)
        if change < tol:
            return x, sweeps
    raise SolverError(f"Gauss-Seidel did not converge in {max_sweeps} sweeps", residuals=history)


def _clean(x: np.ndarray) -> np.ndarray:
    worst = int(np.argmin(x))
    if x[worst] < -NEGATIVE_CLAMP_TOL:
        raise NegativeProbabilityError("stationary solve produced a negative probability", float(x[worst]), worst)
    x = np.where(x < 0, 0.0, x)
    return x / x.sum()


def relative_residual(x: np.ndarray, g: sp.csr_matrix) -> float:
    """max |x G| relative to the largest exit rate."""
    scale = max(1.0, float(np.abs(g.diagonal()).max()))
    return float(np.abs(g.T @ x).max()) / scale


def solve_stationary(
    g: sp.csr_matrix,
    space: StateSpace,
    method: SolveMethod = "auto",
    tol: float = GS_TOL,
    max_sweeps: int = GS_MAX_SWEEPS,
) -> QbdSolution:
    n = g.shape[0]
    if method == "auto":
        method = "direct" if n <= SPARSE_DIRECT_LIMIT else "gauss-seidel"

    sweeps = 0
    if method == "direct":
        x = _solve_direct(g)
    elif method == "gauss-seidel":
        x, sweeps = _solve_gauss_seidel(g, tol, max_sweeps)
    else:
        raise ValueError(f"unknown solve method {method!r}")

    x = _clean(x)
    residual = relative_residual(x, g)
    if residual > RESIDUAL_TOL:
        raise SolverError(f"{method} solution violates balance equations", residuals=[residual])
    return QbdSolution(
        space=space,
        probabilities=x.reshape(space.n_states, space.phases),
        residual=residual,
        solver_tag=method,
        sweeps=sweeps,
    )


# --- Metrics ---


def loss_probability(sol: QbdSolution, cfg: SystemConfig, space: StateSpace) -> float:
    rates = cfg.arrivals.lambda1.sum(axis=1)
    accepted = float(acceptance_probabilities(cfg, space) @ (sol.probabilities @ rates))
    loss = 1.0 - accepted / arrival_rate(cfg.arrivals)
    return min(max(loss, 0.0), 1.0)


def utilization(sol: QbdSolution, cfg: SystemConfig, space: StateSpace) -> float:
    occupied = float(space.state_r @ sol.probabilities.sum(axis=1))
    return min(max(occupied / cfg.prbs, 0.0), 1.0)


def accepted_prb_rate(sol: QbdSolution, cfg: SystemConfig, space: StateSpace) -> float:
    """Mean PRBs admitted per second; equals mu * U * R in equilibrium."""
    p = cfg.pmf.padded(cfg.prbs)
    cumulative = np.cumsum(np.arange(cfg.prbs + 1) * p)
    admitted = cumulative[cfg.prbs - space.state_r]
    admitted[space.state_k >= cfg.servers] = 0.0
    rates = cfg.arrivals.lambda1.sum(axis=1)
    return float(admitted @ (sol.probabilities @ rates))


def mean_sessions(sol: QbdSolution, space: StateSpace) -> float:
    return float(space.state_k @ sol.probabilities.sum(axis=1))


def evaluate(
    cfg: SystemConfig,
    method: SolveMethod = "auto",
    generator_path: Path | None = None,
) -> tuple[StateSpace, QbdSolution, Metrics]:
    space = build_state_space(cfg)
    g = assemble_generator(cfg, space)
    if generator_path is not None:
        write_generator_triplets(g, generator_path)
    sol = solve_stationary(g, space, method=method)
    metrics = Metrics(
        loss_probability=loss_probability(sol, cfg, space),
        utilization=utilization(sol, cfg, space),
        method="analytic",
        residual=sol.residual,
    )
    return space, sol, metrics


def write_generator_triplets(g: sp.spmatrix, path: Path) -> None:
    """One `row col value` line per stored entry, 0-based, after a '#' header."""
    coo = sp.coo_matrix(g)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"# dim={coo.shape[0]} nnz={coo.nnz}"]
    lines.extend(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}" for i in order)
    atomic_write_text(path, "\n".join(lines) + "\n")
