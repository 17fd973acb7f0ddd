"""Unweighted atomic-norm denoising and Toeplitz frequency extraction.

The constrained problem

    minimize    (1/(2L)) tr(T) + t/2
    subject to  [[T, x], [x^H, t]] >= 0,   T Toeplitz,   ||y - x_R||^2 <= mu

is solved through its dual, which is the full-circle case of the weighted dual
program with data-fit radius ``sqrt(mu)``.  The primal ``(T, x, t)`` is read
from the dual slack of the Schur block: it equals a positive multiple of
``conj([[T, -x], [-x^H, t]])``.  The multiple is fixed by strong duality, since
the primal objective must equal the dual optimum.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .conic_core import complexify
from .recovery import least_squares_gains
from .signal_model import OFDMConfig, PilotObservation, PriorBands, frequencies_to_delays
from .weighted_ast import EstimationError, build_dual_program, solve_program

__all__ = [
    "AstEstimate",
    "AstSolution",
    "DegenerateSpectrumError",
    "choose_mu",
    "estimate_channel_atomsr",
    "solve_ast",
    "toeplitz_frequencies",
]

FULL_CIRCLE = PriorBands(((0.0, 1.0, 1.0),))
DEFAULT_RANK_TOLERANCE = 1e-4


class DegenerateSpectrumError(ValueError):
    """The Toeplitz matrix has no eigenvalue gap (white spectrum)."""


@dataclasses.dataclass
class AstSolution:
    toeplitz: np.ndarray
    denoised: np.ndarray
    slack: float
    mu: float
    objective: float = 0.0
    iterations: int = 0


@dataclasses.dataclass
class AstEstimate:
    frequencies: np.ndarray
    delays: np.ndarray
    gains: np.ndarray
    solution: AstSolution

    @property
    def n_paths(self) -> int:
        return int(self.frequencies.size)


def choose_mu(noise_variance: float, L: int) -> float:
    """``sigma * sqrt(2 L log L)``; zero for noiseless data."""
    if noise_variance < 0:
        raise ValueError("noise variance must be nonnegative")
    return math.sqrt(noise_variance) * math.sqrt(2.0 * L * math.log(L))


def solve_ast(obs: PilotObservation, mu: float) -> AstSolution:
    """Solve the constrained atomic-norm denoising problem.

    Raises
    ------
    EstimationError
        If the dual solve is not optimal.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    L = obs.grid_size
    radius = math.sqrt(mu)
    if float(np.linalg.norm(obs.values)) <= radius:
        # zero is feasible, and it has zero atomic norm
        return AstSolution(np.zeros((L, L), dtype=complex), np.zeros(L, dtype=complex), 0.0, mu)
    program = build_dual_program(obs, FULL_CIRCLE, radius)
    cert, sol = solve_program(program, obs)
    Zc = complexify(sol.z_psd[0])
    Tz = Zc[:L, :L]
    tz = float(Zc[L, L].real)
    value = cert.objective
    raw = float(np.trace(Tz).real) / (2 * L) + tz / 2.0
    if value <= 0 or raw <= 0:
        raise EstimationError("degenerate dual slack; cannot recover the primal", sol)
    kappa = raw / value
    T = np.conj(Tz) / kappa
    T = 0.5 * (T + T.conj().T)
    x = -np.conj(Zc[:L, L]) / kappa
    return AstSolution(T, x, tz / kappa, mu, value, sol.iterations)


def toeplitz_frequencies(solution: AstSolution | np.ndarray, rank_tolerance: float = DEFAULT_RANK_TOLERANCE,
                         max_order: int | None = None) -> np.ndarray:
    """Frequencies of a PSD Toeplitz matrix by noise-subspace polynomial rooting.

    The model order is the number of eigenvalues above
    ``rank_tolerance * lambda_max`` (capped at ``max_order`` if given).

    Raises
    ------
    DegenerateSpectrumError
        If every eigenvalue passes the threshold.
    """
    T = solution.toeplitz if isinstance(solution, AstSolution) else np.asarray(solution)
    L = T.shape[0]
    w, V = np.linalg.eigh(0.5 * (T + T.conj().T))
    lam_max = w[-1]
    if lam_max <= 0:
        return np.zeros(0)
    order = int(np.sum(w > rank_tolerance * lam_max))
    if order >= L:
        raise DegenerateSpectrumError("no eigenvalue gap: all eigenvalues are significant")
    if max_order is not None:
        order = min(order, max_order)
    if order == 0:
        return np.zeros(0)
    En = V[:, : L - order]
    C = En @ En.conj().T
    # a(f)^H C a(f) = sum_k c_k z^k with z = exp(-j 2 pi f), c_k the k-th superdiagonal sum
    coeffs = np.array([np.trace(C, offset=k) for k in range(-(L - 1), L)])
    roots = np.roots(coeffs[::-1])
    inside = roots[np.abs(roots) <= 1.0 + 1e-12]
    if inside.size < order:
        inside = roots
    pick = inside[np.argsort(np.abs(np.abs(inside) - 1.0))[:order]]
    freqs = (-np.angle(pick) / (2.0 * np.pi)) % 1.0
    return np.sort(freqs)


def estimate_channel_atomsr(
    obs: PilotObservation,
    config: OFDMConfig,
    mu: float | None = None,
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE,
) -> AstEstimate:
    """Denoise, then fit least-squares gains at the frequencies found in ``T``."""
    mu = choose_mu(obs.noise_variance, obs.grid_size) if mu is None else mu
    sol = solve_ast(obs, mu)
    freqs = toeplitz_frequencies(sol, rank_tolerance, max_order=obs.pilot_count)
    gains = least_squares_gains(freqs, obs)
    return AstEstimate(freqs, frequencies_to_delays(freqs, config), gains, sol)
