"""Brute-force grid oracle for the weighted atomic norm.

The continuous weighted atomic norm of noiseless pilot data is approximated by
restricting atoms to a fine uniform grid.  Only grid points inside a prior
band carry an atom; points outside all bands have infinite weight and are
dropped.  The resulting problem

    minimize    sum_m W_m |c_m|
    subject to  sum_m c_m exp(-j 2 pi f_m n_p) = y_p   for every pilot p

is a second-order cone program with one three-dimensional cone per grid point.
It is solved by :mod:`ofdm_wanm.conic_core` and shares no code with the
weighted dual solver it is used to validate.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

from .conic_core import ProgramBuilder, Status, solve
from .signal_model import PilotObservation, PriorBands, wrap_distance

__all__ = [
    "ComparisonReport",
    "GridAtomicProblem",
    "OracleResult",
    "grid_weighted_atomic_norm",
    "oracle_vs_sdp",
    "random_grid_instance",
]

MIN_GRID_POINTS = 4096
SUPPORT_THRESHOLD = 1e-6
CANDIDATE_THRESHOLD = 1e-9
COARSE_TOLERANCE = 1e-8
ORACLE_TOLERANCE = 1e-10


@dataclasses.dataclass
class GridAtomicProblem:
    """Grid frequencies with their prior weights and the observation to fit."""

    grid: np.ndarray
    weights: np.ndarray
    observation: PilotObservation

    @classmethod
    def from_bands(cls, obs: PilotObservation, bands: PriorBands, M: int) -> "GridAtomicProblem":
        if M < MIN_GRID_POINTS:
            raise ValueError(f"grid size must be at least {MIN_GRID_POINTS}, got {M}")
        full = np.arange(M) / M
        weights = np.full(M, np.inf)
        for lo, hi, w in bands:
            inside = (full >= lo) & (full <= hi)
            weights[inside] = np.minimum(weights[inside], w)
        keep = np.isfinite(weights)
        return cls(full[keep], weights[keep], obs)


@dataclasses.dataclass
class OracleResult:
    value: float
    support: np.ndarray
    coefficients: np.ndarray
    status: Status
    grid_size: int

    @property
    def feasible(self) -> bool:
        return self.status is Status.OPTIMAL


def grid_weighted_atomic_norm(obs: PilotObservation, bands: PriorBands, M: int = 8192,
                              tolerance: float = ORACLE_TOLERANCE) -> OracleResult:
    """Grid-restricted weighted atomic norm of a noiseless observation.

    Parameters
    ----------
    obs : PilotObservation
        Noiseless pilots.
    bands : PriorBands
        Each band contributes its weight to the grid points it contains.
    M : int
        Grid size over [0, 1); at least 4096.
    tolerance : float
        Solver tolerance of the polishing solve on the candidate points.  It
        is kept tight so that off-support coefficients fall well below the
        support threshold.

    Returns
    -------
    OracleResult
        ``value`` is the optimal weighted coefficient mass and ``support`` the
        grid frequencies carrying more than ``1e-6`` of it.  When the data lie
        outside the span of the in-band grid atoms the status is
        ``INFEASIBLE`` and ``value`` is infinite.
    """
    problem = GridAtomicProblem.from_bands(obs, bands, M)
    if not np.any(obs.values):
        return OracleResult(0.0, np.zeros(0), np.zeros(0, dtype=complex), Status.OPTIMAL, M)
    f, w = problem.grid, problem.weights
    status, value, c = _solve_grid(obs, f, w, COARSE_TOLERANCE)
    if status is not Status.OPTIMAL:
        return OracleResult(np.inf, np.zeros(0), np.zeros(0, dtype=complex), status, M)
    # polish: re-solve on the points that carry any mass.  The small problem
    # tolerates a much tighter tolerance, which pushes spurious points to zero.
    candidates = w * np.abs(c) > CANDIDATE_THRESHOLD * value
    status2, value2, c2 = _solve_grid(obs, f[candidates], w[candidates], tolerance)
    if status2 is Status.OPTIMAL:
        f, w, value, c = f[candidates], w[candidates], value2, c2
    mass = w * np.abs(c)
    keep = mass > SUPPORT_THRESHOLD * max(value, np.finfo(float).tiny)
    return OracleResult(float(value), f[keep], c[keep], Status.OPTIMAL, M)


def _solve_grid(obs: PilotObservation, f: np.ndarray, w: np.ndarray, tolerance: float):
    """Weighted l1 fit over the grid ``f``; returns (status, value, coefficients)."""
    K = f.size
    pos = obs.positions
    P = pos.size
    A = np.exp(-2j * np.pi * np.outer(pos, f))  # P x K

    b = ProgramBuilder()
    objective = np.zeros((K, 3))
    objective[:, 0] = w
    g = b.add_soc(3, K, name="atoms", objective=objective)
    y = obs.values
    rows = b.add_rows(np.concatenate([y.real, y.imag]), "fit")
    re_rows, im_rows = rows[:P], rows[P:]
    cone = np.arange(K)[None, :]
    # Re(A c) = Re A Re c - Im A Im c ; Im(A c) = Im A Re c + Re A Im c
    b.soc_terms(g, re_rows[:, None], cone, 1, A.real)
    b.soc_terms(g, re_rows[:, None], cone, 2, -A.imag)
    b.soc_terms(g, im_rows[:, None], cone, 1, A.imag)
    b.soc_terms(g, im_rows[:, None], cone, 2, A.real)
    sol = solve(b.build(), tolerance=tolerance)
    if sol.status is not Status.OPTIMAL:
        return sol.status, np.inf, np.zeros(0, dtype=complex)
    x = sol.soc[0]
    return sol.status, float(sol.objective_value), x[:, 1] + 1j * x[:, 2]


def random_grid_instance(
    rng: np.random.Generator,
    bands: PriorBands,
    n_atoms: int,
    L: int = 8,
    M: int = 8192,
    min_separation: float = 0.0,
    max_attempts: int = 1000,
) -> tuple[PilotObservation, np.ndarray, np.ndarray]:
    """Noiseless full-pilot observation of ``n_atoms`` on-grid in-band atoms.

    Returns the observation followed by the ground-truth frequencies and gains.
    """
    full = np.arange(M) / M
    candidates = [full[(full >= lo) & (full <= hi)] for lo, hi, _ in bands]
    for _ in range(max_attempts):
        freqs = np.sort(np.array([rng.choice(candidates[rng.integers(len(candidates))]) for _ in range(n_atoms)]))
        if n_atoms < 2 or min(
            wrap_distance(freqs[i], freqs[j]) for i in range(n_atoms) for j in range(i + 1, n_atoms)
        ) >= min_separation:
            break
    else:
        raise RuntimeError("could not place separated atoms")
    gains = rng.uniform(0.5, 1.5, n_atoms) * np.exp(2j * np.pi * rng.uniform(size=n_atoms))
    n = np.arange(L)
    values = np.exp(-2j * np.pi * np.outer(n, freqs)) @ gains
    return PilotObservation(n, values, 0.0, L), freqs, gains


@dataclasses.dataclass
class ComparisonReport:
    """Per-instance agreement between the grid oracle and a dual solver."""

    oracle_values: list[float]
    sdp_values: list[float]
    relative_gaps: list[float]
    support_errors: list[float]
    grid_size: int
    failures: list[dict] = dataclasses.field(default_factory=list)

    @property
    def max_gap(self) -> float:
        return max(self.relative_gaps, default=0.0)

    @property
    def max_support_error(self) -> float:
        return max(self.support_errors, default=0.0)

    def passed(self, gap_tolerance: float = 1e-3) -> bool:
        return not self.failures and self.max_gap <= gap_tolerance and self.max_support_error <= 1.0 / self.grid_size


def _support_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest wrap-around distance from a point of either set to the other set."""
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return np.inf
    d = np.abs(a[:, None] - b[None, :])
    d = np.minimum(d, 1.0 - d)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _cluster(points: np.ndarray, radius: float) -> np.ndarray:
    """Collapse runs of grid points closer than ``radius`` to their mean."""
    if points.size == 0:
        return points
    pts = np.sort(points)
    groups = [[pts[0]]]
    for p in pts[1:]:
        if p - groups[-1][-1] <= radius:
            groups[-1].append(p)
        else:
            groups.append([p])
    return np.array([float(np.mean(g)) for g in groups])


def oracle_vs_sdp(
    sdp_solver: Callable[[PilotObservation, PriorBands], tuple[float, np.ndarray]],
    bands: PriorBands,
    trials: int,
    n_atoms: int = 1,
    L: int = 8,
    M: int = 8192,
    seed: int = 0,
    min_separation: float = 0.0,
    gap_tolerance: float = 1e-3,
) -> ComparisonReport:
    """Compare a dual solver against the grid oracle on random instances.

    Parameters
    ----------
    sdp_solver : callable
        Maps ``(obs, bands)`` to ``(dual value, extracted frequencies)``.
    bands : PriorBands
    trials : int
    n_atoms : int
        Number of on-grid in-band atoms per instance.
    L : int
        Grid size of the observation; every index is a pilot.
    M : int
        Oracle grid size.

    Returns
    -------
    ComparisonReport
        Failing instances are dumped into ``failures`` with both solutions.
    """
    if L > 8:
        raise ValueError("the oracle comparison is meant for L <= 8")
    rng = np.random.default_rng(seed)
    report = ComparisonReport([], [], [], [], M)
    for t in range(trials):
        obs, truth, gains = random_grid_instance(rng, bands, n_atoms, L, M, min_separation)
        oracle = grid_weighted_atomic_norm(obs, bands, M)
        value, freqs = sdp_solver(obs, bands)
        freqs = np.sort(np.asarray(freqs, dtype=float))
        gap = abs(value - oracle.value) / max(abs(oracle.value), 1e-12)
        # the oracle may split an atom across neighbouring grid points
        support = _cluster(oracle.support, 1.5 / M)
        err = _support_distance(support, freqs)
        report.oracle_values.append(oracle.value)
        report.sdp_values.append(float(value))
        report.relative_gaps.append(gap)
        report.support_errors.append(err)
        if not oracle.feasible or gap > gap_tolerance or err > 1.0 / M:
            report.failures.append(
                {
                    "trial": t,
                    "truth": truth.tolist(),
                    "gains": [[g.real, g.imag] for g in gains],
                    "oracle_value": oracle.value,
                    "oracle_support": oracle.support.tolist(),
                    "sdp_value": float(value),
                    "sdp_frequencies": freqs.tolist(),
                }
            )
    return report
