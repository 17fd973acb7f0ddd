"""MUSIC baseline on a contiguous block of pilots."""

from __future__ import annotations

import dataclasses

import numpy as np

from .signal_model import PilotObservation

__all__ = [
    "DegenerateDataError",
    "NonContiguousPilotsError",
    "PseudoSpectrum",
    "music_frequencies",
    "smoothed_covariance",
]

DEFAULT_GRID_SIZE = 2**14


class NonContiguousPilotsError(ValueError):
    """MUSIC with spatial smoothing needs uniformly spaced, contiguous samples."""


class DegenerateDataError(ValueError):
    """The smoothed covariance has lower rank than the requested model order."""


@dataclasses.dataclass
class PseudoSpectrum:
    grid: np.ndarray
    values: np.ndarray


def smoothed_covariance(samples, window: int) -> np.ndarray:
    """Forward-backward averaged covariance of all length-``window`` sub-vectors."""
    x = np.asarray(samples, dtype=complex)
    K = x.size - window + 1
    if window < 1 or K < 1:
        raise ValueError(f"window {window} does not fit {x.size} samples")
    snaps = np.lib.stride_tricks.sliding_window_view(x, window).T  # window x K
    Rf = snaps @ snaps.conj().T / K
    J = np.eye(window)[::-1]
    return 0.5 * (Rf + J @ Rf.conj() @ J)


def music_frequencies(
    obs: PilotObservation,
    model_order: int,
    smoothing_window: int | None = None,
    grid_size: int = DEFAULT_GRID_SIZE,
    rank_tolerance: float = 1e-10,
) -> tuple[PseudoSpectrum, np.ndarray]:
    """MUSIC pseudospectrum and its ``model_order`` strongest peaks.

    Parameters
    ----------
    obs : PilotObservation
        Pilots must occupy consecutive reduced indices.
    model_order : int
        Number of paths to report.
    smoothing_window : int, optional
        Sub-array length; defaults to ``P // 2``.
    grid_size : int
        Number of uniformly spaced frequencies in [0, 1).

    Returns
    -------
    (PseudoSpectrum, numpy.ndarray)
        Spectrum ``1 / ||E_n^H a(f)||^2`` and sorted peak frequencies.
    """
    pos = obs.positions
    if pos.size < 2 or np.any(np.diff(pos) != 1):
        raise NonContiguousPilotsError("pilot positions are not a contiguous block")
    M = obs.pilot_count // 2 if smoothing_window is None else int(smoothing_window)
    if model_order < 0:
        raise ValueError("model_order must be nonnegative")
    if M < model_order + 1:
        raise ValueError(f"smoothing window {M} must exceed model order {model_order}")
    # a common offset of the pilot block only rotates each path's phase, so the
    # steering vectors can start at index 0
    Rm = smoothed_covariance(obs.values, M)
    w, V = np.linalg.eigh(Rm)
    if model_order > 0 and np.sum(w > rank_tolerance * max(w[-1], np.finfo(float).tiny)) < model_order:
        raise DegenerateDataError(f"covariance rank below model order {model_order}")
    En = V[:, : M - model_order]
    grid = np.arange(grid_size) / grid_size
    # ||E_n^H a(f)||^2 for a_n(f) = exp(-j 2 pi f n), evaluated with one FFT per column
    spec = np.fft.fft(En.conj(), n=grid_size, axis=0)
    denom = np.sum(np.abs(spec) ** 2, axis=1)
    values = 1.0 / np.maximum(denom, np.finfo(float).tiny)
    spectrum = PseudoSpectrum(grid, values)
    if model_order == 0:
        return spectrum, np.zeros(0)
    is_peak = (values >= np.roll(values, 1)) & (values > np.roll(values, -1))
    idx = np.nonzero(is_peak)[0]
    top = idx[np.argsort(-values[idx])[:model_order]]
    freqs = grid[top]
    return spectrum, np.sort(freqs)
