"""Gain recovery by least squares and full-band channel reconstruction."""

from __future__ import annotations

import warnings

import numpy as np

from .signal_model import OFDMConfig, PilotObservation

__all__ = [
    "IllConditionedWarning",
    "UnderdeterminedError",
    "least_squares_gains",
    "reconstruct_response",
    "vandermonde_design",
]


class UnderdeterminedError(ValueError):
    """More frequencies than pilot observations."""


class IllConditionedWarning(RuntimeWarning):
    """The design matrix is numerically rank deficient; a ridge fallback was used."""


def vandermonde_design(frequencies, positions) -> np.ndarray:
    """``Z[p, r] = exp(-j 2 pi f_r n_p)``."""
    f = np.asarray(frequencies, dtype=float).ravel()
    n = np.asarray(positions, dtype=float).ravel()
    return np.exp(-2j * np.pi * np.outer(n, f))


def least_squares_gains(frequencies, obs: PilotObservation, rcond: float = 1e-10) -> np.ndarray:
    """Gains minimizing ``||Z h - y||``.

    Parameters
    ----------
    frequencies : array_like
        Distinct normalized frequencies.
    obs : PilotObservation
    rcond : float
        Relative singular-value threshold for declaring rank deficiency.

    Returns
    -------
    numpy.ndarray
        Complex gains, one per frequency.

    Raises
    ------
    UnderdeterminedError
        If there are more frequencies than pilots.
    """
    f = np.asarray(frequencies, dtype=float).ravel()
    if f.size == 0:
        return np.zeros(0, dtype=complex)
    if f.size > obs.pilot_count:
        raise UnderdeterminedError(f"{f.size} frequencies but only {obs.pilot_count} pilots")
    Z = vandermonde_design(f, obs.positions)
    y = obs.values
    sol, _, rank, sv = np.linalg.lstsq(Z, y, rcond=rcond)
    if rank < f.size:
        warnings.warn(
            f"design matrix has numerical rank {rank} < {f.size}; using a ridge fallback",
            IllConditionedWarning,
            stacklevel=2,
        )
        G = Z.conj().T @ Z
        ridge = 1e-10 * np.real(np.trace(G))
        sol = np.linalg.solve(G + ridge * np.eye(f.size), Z.conj().T @ y)
    return sol


def reconstruct_response(frequencies, gains, config: OFDMConfig) -> np.ndarray:
    """``h[n] = sum_r h_r exp(-j 2 pi f_r (L/N) n)`` for ``n = 0..N-1``."""
    f = np.asarray(frequencies, dtype=float).ravel()
    g = np.asarray(gains, dtype=complex).ravel()
    if f.size != g.size:
        raise ValueError("frequencies and gains differ in length")
    n = np.arange(config.n_subcarriers)
    if f.size == 0:
        return np.zeros(n.size, dtype=complex)
    scale = config.grid_size / config.n_subcarriers
    return np.exp(-2j * np.pi * scale * np.outer(n, f)) @ g
