"""Weighted atomic-norm channel estimation through its dual program.

The weighted atomic norm with a piecewise-constant prior has the dual

    maximize    Re<q_R, y_R> - sigma ||q_R||
    subject to  q_n = 0 for n outside R,
                |Q(f)| <= D_i for f in band i,

with ``Q(f) = sum_n q_n exp(j 2 pi f n)``.  Each band bound is certified by
the Gram-pair constraints of :mod:`ofdm_wanm.trig_poly`.  Frequencies are read
off where ``|Q|`` reaches the band weight, and gains follow by least squares.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.optimize import minimize_scalar

from . import trig_poly
from .conic_core import ConicProgram, ConicSolution, ProgramBuilder, Status, solve
from .recovery import least_squares_gains
from .signal_model import OFDMConfig, PilotObservation, PriorBands, frequencies_to_delays

__all__ = [
    "DualCertificate",
    "EstimationError",
    "WeightedEstimate",
    "build_dual_sdp",
    "build_dual_program",
    "dual_polynomial",
    "estimate_channel_weighted",
    "extract_frequencies",
    "noise_radius",
    "solve_dual",
]

DEFAULT_GRID_POINTS = 4096
DEFAULT_ATTAINMENT = 0.99
DEFAULT_NOISE_CONFIDENCE = 0.99
SOLVE_TARGET = 1e-9


class EstimationError(RuntimeError):
    """The dual program did not reach an optimal status."""

    def __init__(self, message: str, solution: ConicSolution | None = None):
        super().__init__(message)
        self.solution = solution

    @property
    def diagnostics(self) -> dict:
        if self.solution is None:
            return {}
        s = self.solution
        return {
            "status": s.status.value,
            "iterations": s.iterations,
            "residuals": list(s.kkt_residuals),
        }


@dataclasses.dataclass
class DualCertificate:
    """Dual vector ``q`` (length ``L``, zero off the pilot set)."""

    q: np.ndarray
    objective: float = 0.0
    iterations: int = 0
    residuals: tuple = (0.0, 0.0, 0.0)

    @property
    def grid_size(self) -> int:
        return int(self.q.size)


@dataclasses.dataclass
class WeightedEstimate:
    frequencies: np.ndarray
    delays: np.ndarray
    gains: np.ndarray
    certificate: DualCertificate

    @property
    def n_paths(self) -> int:
        return int(self.frequencies.size)


def _expand_bands(bands) -> list[tuple[float, float, float]]:
    """Split bands at the f = 0.5 singularity; ``(0, 1)`` stays whole."""
    out = []
    for lo, hi, w in bands:
        if lo <= 0.0 and hi >= 1.0:
            out.append((0.0, 1.0, w))
            continue
        for a, b in trig_poly.split_band(lo, hi):
            out.append((a, b, w))
    return out


def build_dual_program(obs: PilotObservation, bands, radius: float) -> ConicProgram:
    """Dual program for a data-fit radius ``radius`` (the ``sigma`` above).

    Free variables ``q`` are stored as ``[Re q, Im q]``.  The program is in
    minimization form, so the objective is the negated dual objective.
    """
    L = obs.grid_size
    R = obs.positions
    y = obs.values
    b = ProgramBuilder()
    obj = np.zeros(2 * L)
    obj[R] = -y.real
    obj[L + R] = -y.imag
    qs = b.add_free(2 * L, "q", objective=obj)

    off = np.setdiff1d(np.arange(L), R)
    if off.size:
        rows = b.add_rows(np.zeros(2 * off.size), "offsupport")
        b.free_terms(rows[: off.size], off, 1.0)
        b.free_terms(rows[off.size:], L + off, 1.0)

    if radius > 0 and R.size:
        P = R.size
        cone_obj = np.zeros(2 * P + 1)
        cone_obj[0] = radius
        g = b.add_soc(2 * P + 1, 1, name="norm", objective=cone_obj)
        rows = b.add_rows(np.zeros(2 * P), "soc_link")
        b.soc_terms(g, rows, 0, np.arange(1, 2 * P + 1), 1.0)
        b.free_terms(rows[:P], R, -1.0)
        b.free_terms(rows[P:], L + R, -1.0)

    for i, (lo, hi, w) in enumerate(_expand_bands(bands)):
        bundle = trig_poly.band_lmi_constraints((lo, hi, w), L)
        trig_poly.lower_bundle(b, bundle, f"band{i}", q_columns=qs)
    return b.build()


def noise_radius(obs: PilotObservation, confidence: float = DEFAULT_NOISE_CONFIDENCE) -> float:
    """Radius of a ball that holds the pilot noise vector with probability ``confidence``.

    ``||w_R||^2`` is ``sigma^2 / 2`` times a chi-square variable with ``2P``
    degrees of freedom, and the Laurent-Massart tail bound gives
    ``||w_R||^2 <= sigma^2 (P + sqrt(2 P x) + x)`` with probability at least
    ``1 - exp(-x)``.
    """
    if obs.noise_variance == 0.0:
        return 0.0
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    P = obs.pilot_count
    x = -math.log(1.0 - confidence)
    return obs.noise_std * math.sqrt(P + math.sqrt(2.0 * P * x) + x)


def build_dual_sdp(obs: PilotObservation, bands: PriorBands,
                   confidence: float = DEFAULT_NOISE_CONFIDENCE) -> ConicProgram:
    """Dual program whose fit radius covers the pilot noise with probability ``confidence``."""
    return build_dual_program(obs, bands, noise_radius(obs, confidence))


def _certificate_from(sol: ConicSolution, program: ConicProgram, L: int, obs: PilotObservation) -> DualCertificate:
    qs = program.free_groups["q"]
    v = sol.free[qs]
    q = v[:L] + 1j * v[L:]
    off = np.setdiff1d(np.arange(L), obs.positions)
    q[off] = 0.0
    return DualCertificate(q, -sol.objective_value, sol.iterations, tuple(sol.kkt_residuals))


def solve_program(program: ConicProgram, obs: PilotObservation, tolerance: float | None = None,
                  target: float | None = SOLVE_TARGET) -> tuple[DualCertificate, ConicSolution]:
    """Solve a dual program and read off the certificate.

    The solver must reach its required tolerance and then keeps going towards
    ``target``: the location of the peaks of ``|Q|`` moves linearly with the
    error in ``q``, so the extra digits show up directly in the frequencies.
    """
    kwargs = {} if tolerance is None else {"tolerance": tolerance}
    sol = solve(program, target=target, **kwargs)
    if sol.status is not Status.OPTIMAL:
        raise EstimationError(f"dual program ended with status {sol.status.value}", sol)
    return _certificate_from(sol, program, obs.grid_size, obs), sol


def solve_dual(obs: PilotObservation, bands: PriorBands) -> DualCertificate:
    """Optimal dual certificate for ``obs`` under the prior ``bands``.

    Raises
    ------
    EstimationError
        If the solver stops without an optimal status.
    """
    if not np.any(obs.values):
        return DualCertificate(np.zeros(obs.grid_size, dtype=complex))
    cert, _ = solve_program(build_dual_sdp(obs, bands), obs)
    return cert


def dual_polynomial(cert: DualCertificate | np.ndarray, f) -> np.ndarray:
    """``Q(f) = sum_n q_n exp(j 2 pi f n)``, vectorized over ``f``."""
    q = cert.q if isinstance(cert, DualCertificate) else np.asarray(cert, dtype=complex)
    f = np.asarray(f, dtype=float)
    n = np.arange(q.size)
    return np.exp(2j * np.pi * np.multiply.outer(f, n)) @ q


def _polish_peak(q, f, value, lo, hi, steps: int = 4) -> tuple[float, float]:
    """Newton steps on the derivative of ``|Q|^2``.

    A scalar maximizer only locates a flat peak to about the square root of
    machine precision; the stationarity condition pins it down to roundoff.
    """
    n = np.arange(q.size)
    w = 2j * np.pi * n
    for _ in range(steps):
        e = np.exp(2j * np.pi * f * n)
        Q, dQ, ddQ = e @ q, e @ (w * q), e @ (w * w * q)
        g = float(np.real(np.conj(Q) * dQ))
        h = float(abs(dQ) ** 2 + np.real(np.conj(Q) * ddQ))
        if h >= 0:
            break
        f_new = f - g / h
        if not lo <= f_new <= hi:
            break
        v_new = float(abs(dual_polynomial(q, f_new)))
        if v_new < value * (1 - 1e-12):
            break
        f, value = f_new, max(value, v_new)
    return f, value


def _band_peaks(q, lo, hi, weight, grid_points, fraction) -> list[tuple[float, float]]:
    grid = np.linspace(lo, hi, grid_points)
    mag = np.abs(dual_polynomial(q, grid))
    padded = np.concatenate([[-np.inf], mag, [-np.inf]])
    is_max = (padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:])
    cand = np.nonzero(is_max & (mag >= fraction * weight))[0]
    step = grid[1] - grid[0] if grid.size > 1 else hi - lo
    peaks = []
    for i in cand:
        a = max(lo, grid[i] - step)
        b = min(hi, grid[i] + step)
        res = minimize_scalar(lambda f: -abs(dual_polynomial(q, f)), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-10})
        f_star, v_star = (float(res.x), -float(res.fun)) if -res.fun >= mag[i] else (float(grid[i]), float(mag[i]))
        f_star, v_star = _polish_peak(q, f_star, v_star, a, b)
        peaks.append((f_star % 1.0, v_star / weight))
    return peaks


def extract_frequencies(
    cert: DualCertificate,
    bands,
    grid_points_per_band: int = DEFAULT_GRID_POINTS,
    attainment_fraction: float = DEFAULT_ATTAINMENT,
) -> np.ndarray:
    """Frequencies where ``|Q|`` reaches at least ``attainment_fraction`` of the band weight.

    Each band is scanned on a uniform grid; local maxima above the threshold
    are refined by bounded scalar maximization and peaks closer than
    ``1 / (4L)`` are merged, keeping the stronger one.
    """
    if grid_points_per_band < 1024:
        raise ValueError("grid_points_per_band must be at least 1024")
    q = cert.q
    L = q.size
    if not np.any(q):
        return np.zeros(0)
    peaks = []
    for lo, hi, w in bands:
        peaks.extend(_band_peaks(q, lo, min(hi, 1.0), w, grid_points_per_band, attainment_fraction))
    # merge by descending strength
    peaks.sort(key=lambda p: -p[1])
    kept: list[float] = []
    radius = 1.0 / (4 * L)
    for f, _ in peaks:
        if all(min(abs(f - g), 1.0 - abs(f - g)) >= radius for g in kept):
            kept.append(f)
    return np.sort(np.array(kept, dtype=float))


def estimate_channel_weighted(
    obs: PilotObservation,
    bands: PriorBands,
    config: OFDMConfig,
    grid_points_per_band: int = DEFAULT_GRID_POINTS,
    attainment_fraction: float = DEFAULT_ATTAINMENT,
) -> WeightedEstimate:
    """Solve the dual, then fit least-squares gains at the extracted peaks."""
    cert = solve_dual(obs, bands)
    freqs = extract_frequencies(cert, bands, grid_points_per_band, attainment_fraction)
    if freqs.size > obs.pilot_count:
        # keep the strongest attainment points when the dual is flat over many
        mags = np.abs(dual_polynomial(cert, freqs))
        freqs = np.sort(freqs[np.argsort(-mags)[: obs.pilot_count]])
    gains = least_squares_gains(freqs, obs)
    return WeightedEstimate(freqs, frequencies_to_delays(freqs, config), gains, cert)
