import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import atoms
from ofdm_wanm.atomsr import (
    AstSolution,
    DegenerateSpectrumError,
    choose_mu,
    estimate_channel_atomsr,
    solve_ast,
    toeplitz_frequencies,
)
from ofdm_wanm.signal_model import OFDMConfig, PilotObservation, wrap_distance


def steer(f, L):
    return np.exp(-2j * np.pi * f * np.arange(L))


def vandermonde_toeplitz(freqs, powers, L):
    return sum(c * np.outer(steer(f, L), steer(f, L).conj()) for f, c in zip(freqs, powers))


def numerical_rank(T, tol=1e-6):
    w = np.linalg.eigvalsh(T)
    return int(np.sum(w > tol * w[-1]))


def full_obs(freqs, gains, L):
    n = np.arange(L)
    return PilotObservation(n, atoms(freqs, gains, n), 0.0, L)


class TestChooseMu:
    def test_zero(self):
        assert choose_mu(0.0, 64) == 0.0

    def test_frozen(self, frozen):
        ref = frozen["choose_mu"]
        assert choose_mu(ref["noise_variance"], ref["grid_size"]) == pytest.approx(ref["mu"], rel=1e-12)
        assert choose_mu(0.01, 64) == pytest.approx(0.1 * math.sqrt(128 * math.log(64)))

    @given(st.floats(0.0, 10.0), st.floats(0.1, 10.0))
    def test_linear_in_sigma(self, sigma, c):
        assert choose_mu((c * sigma) ** 2, 32) == pytest.approx(c * choose_mu(sigma**2, 32), abs=1e-12)

    def test_negative(self):
        with pytest.raises(ValueError):
            choose_mu(-1.0, 8)


class TestSolveAst:
    def test_single_path_interpolates(self):
        obs = full_obs([0.2], [1.0 + 0.5j], 16)
        sol = solve_ast(obs, 0.0)
        np.testing.assert_allclose(sol.denoised, obs.values, atol=1e-6)
        assert numerical_rank(sol.toeplitz) == 1

    def test_zero_data(self):
        obs = PilotObservation(np.arange(8), np.zeros(8), 0.0, 8)
        sol = solve_ast(obs, 0.0)
        assert not sol.denoised.any() and not sol.toeplitz.any() and sol.objective == 0.0

    def test_two_atoms_rank_two(self):
        sol = solve_ast(full_obs([0.1, 0.55], [1.0, -0.7j], 16), 0.0)
        assert numerical_rank(sol.toeplitz) == 2

    def test_toeplitz_structure(self):
        sol = solve_ast(full_obs([0.1, 0.55], [1.0, -0.7j], 12), 0.0)
        T = sol.toeplitz
        for k in range(-11, 12):
            d = np.diagonal(T, k)
            assert np.ptp(d.real) < 1e-9 and np.ptp(d.imag) < 1e-9
        assert np.linalg.eigvalsh(T).min() > -1e-8 * np.linalg.eigvalsh(T).max()

    def test_noisy_fit_constraint(self):
        rng = np.random.default_rng(3)
        L = 16
        n = np.arange(L)
        y = atoms([0.3], [1.0], n) + 0.1 * (rng.normal(size=L) + 1j * rng.normal(size=L))
        mu = 0.2
        sol = solve_ast(PilotObservation(n, y, 0.01, L), mu)
        assert np.linalg.norm(y - sol.denoised) ** 2 <= mu * (1 + 1e-5)

    @pytest.mark.parametrize("seed", range(4))
    def test_atomic_norm_of_separated_mixture(self, seed):
        rng = np.random.default_rng(seed)
        L = 32
        freqs = np.array([0.05, 0.3, 0.62]) + rng.uniform(0, 0.05, size=3)
        gains = rng.uniform(0.5, 1.5, 3) * np.exp(2j * np.pi * rng.uniform(size=3))
        sol = solve_ast(full_obs(freqs, gains, L), 0.0)
        value = np.trace(sol.toeplitz).real / (2 * L) + sol.slack / 2
        assert value == pytest.approx(np.abs(gains).sum(), rel=1e-4)


class TestToeplitzFrequencies:
    def test_rank_one(self):
        T = vandermonde_toeplitz([0.3], [1.0], 10)
        np.testing.assert_allclose(toeplitz_frequencies(T), [0.3], atol=1e-6)

    def test_identity_is_degenerate(self):
        with pytest.raises(DegenerateSpectrumError):
            toeplitz_frequencies(np.eye(8))

    def test_zero_matrix(self):
        assert toeplitz_frequencies(np.zeros((6, 6))).size == 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31))
    def test_three_separated_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        L = 16
        while True:
            f = np.sort(rng.uniform(0, 1, 3))
            if all(wrap_distance(a, b) > 2.0 / L for i, a in enumerate(f) for b in f[i + 1:]):
                break
        T = vandermonde_toeplitz(f, rng.uniform(0.5, 2.0, 3), L)
        got = toeplitz_frequencies(AstSolution(T, np.zeros(L), 0.0, 0.0))
        assert got.size == 3
        assert np.max(wrap_distance(got, f)) < 1e-5


def test_estimate_recovers_gains():
    cfg = OFDMConfig(n_subcarriers=128, grid_size=16, pilot_count=16, cp_length=16)
    est = estimate_channel_atomsr(full_obs([0.2, 0.7], [1.0, 0.5j], 16), cfg)
    np.testing.assert_allclose(est.frequencies, [0.2, 0.7], atol=1e-6)
    np.testing.assert_allclose(est.gains, [1.0, 0.5j], atol=1e-4)
