import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import atoms
from ofdm_wanm.recovery import (
    IllConditionedWarning,
    UnderdeterminedError,
    least_squares_gains,
    reconstruct_response,
    vandermonde_design,
)
from ofdm_wanm.signal_model import ChannelRealization, OFDMConfig, PilotObservation, channel_frequency_response

CFG = OFDMConfig(n_subcarriers=512, grid_size=64, pilot_count=36)


def obs_for(freqs, gains, positions, noise=None):
    y = atoms(freqs, gains, positions)
    if noise is not None:
        y = y + noise
    return PilotObservation(positions, y, 0.0, 64)


def test_design_matrix():
    Z = vandermonde_design([0.25], [0, 1, 2])
    np.testing.assert_allclose(Z[:, 0], [1, -1j, -1], atol=1e-15)


def test_exact_gains():
    pos = np.sort(np.random.default_rng(0).choice(64, 36, replace=False))
    f = [0.17, 0.22, 0.74, 0.8]
    g = np.array([1.0, -0.5j, 0.3 + 0.4j, 1.2])
    got = least_squares_gains(f, obs_for(f, g, pos))
    np.testing.assert_allclose(got, g, rtol=1e-10, atol=1e-10 * np.abs(g).max())


def test_constant_observation():
    pos = np.arange(10)
    got = least_squares_gains([0.0], PilotObservation(pos, np.full(10, 2 - 1j), 0.0, 64))
    assert got[0] == pytest.approx(2 - 1j)


@settings(max_examples=25)
@given(st.integers(0, 2**31))
def test_noisy_residual_orthogonal(seed):
    rng = np.random.default_rng(seed)
    pos = np.sort(rng.choice(64, 20, replace=False))
    f = np.sort(rng.uniform(0, 1, 3))
    noise = rng.normal(size=20) + 1j * rng.normal(size=20)
    obs = obs_for(f, [1, 1, 1], pos, noise)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        g = least_squares_gains(f, obs)
    Z = vandermonde_design(f, pos)
    r = obs.values - Z @ g
    assert np.linalg.norm(r) <= np.linalg.norm(obs.values) * (1 + 1e-12)
    if np.linalg.matrix_rank(Z, tol=1e-10 * np.linalg.norm(Z, 2)) == 3:
        assert np.abs(Z.conj().T @ r).max() <= 1e-10 * np.linalg.norm(obs.values) * np.linalg.norm(Z)


def test_underdetermined():
    with pytest.raises(UnderdeterminedError):
        least_squares_gains(np.linspace(0, 0.9, 5), obs_for([0.1], [1], np.arange(4)))


def test_coincident_frequencies_warn():
    obs = obs_for([0.3], [1.0], np.arange(12))
    with pytest.warns(IllConditionedWarning):
        g = least_squares_gains([0.3, 0.3], obs)
    assert np.all(np.isfinite(g))
    assert g.sum() == pytest.approx(1.0, abs=1e-6)


def test_empty_frequencies():
    assert least_squares_gains([], obs_for([0.1], [1], np.arange(4))).size == 0


class TestReconstruct:
    def test_zero_paths(self):
        h = reconstruct_response([], [], CFG)
        assert h.shape == (512,) and not h.any()

    def test_matches_channel_response(self):
        ch = ChannelRealization.from_frequencies([0.2, 0.77], [1.0, 0.3 - 0.2j], CFG)
        h = reconstruct_response(ch.frequencies(CFG), ch.gains, CFG)
        # every V-th subcarrier is a reduced-grid sample
        ref = channel_frequency_response(ch, CFG, np.arange(64))
        np.testing.assert_allclose(h[:: CFG.decimation], ref, atol=1e-12)

    def test_linear_in_gains(self):
        f = [0.1, 0.4]
        a, b = np.array([1, 2j]), np.array([0.5, -1])
        np.testing.assert_allclose(
            reconstruct_response(f, 2 * a + b, CFG),
            2 * reconstruct_response(f, a, CFG) + reconstruct_response(f, b, CFG),
            atol=1e-12,
        )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct_response([0.1], [1, 2], CFG)
