import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DEFAULT_BANDS, atoms
from ofdm_wanm.atomsr import estimate_channel_atomsr
from ofdm_wanm.signal_model import (
    ChannelRealization,
    OFDMConfig,
    PilotObservation,
    PriorBands,
    observe,
    pilot_positions,
    sample_channel,
    wrap_distance,
)
from ofdm_wanm.weighted_ast import (
    DualCertificate,
    build_dual_sdp,
    dual_polynomial,
    estimate_channel_weighted,
    extract_frequencies,
    noise_radius,
    solve_dual,
)

ONE_BAND = PriorBands(((0.15, 0.30, 1.0),))
SMALL = OFDMConfig(n_subcarriers=128, grid_size=16, pilot_count=16, cp_length=16)
SEPARATION = OFDMConfig(n_subcarriers=256, grid_size=32, pilot_count=20, cp_length=32)


def full_obs(freqs, gains, L, scale=1.0):
    n = np.arange(L)
    return PilotObservation(n, scale * atoms(freqs, gains, n), 0.0, L)


def band_ratio(cert, bands, points=10_000):
    return max(np.abs(dual_polynomial(cert, np.linspace(lo, hi, points))).max() / w for lo, hi, w in bands)


class TestProgram:
    def test_noiseless_structure(self):
        obs = full_obs([0.2], [1.0], 4)
        prog = build_dual_sdp(obs, ONE_BAND)
        assert prog.soc_groups == []
        assert sorted(b.order for b in prog.psd_blocks) == [2 * 3, 2 * 5]
        # L complex trace equalities: one real row for k = 0, two for each k > 0
        rows = prog.row_groups["band0:identity"]
        assert rows.stop - rows.start == 2 * 4 - 1

    def test_noisy_has_norm_cone(self):
        obs = PilotObservation(np.arange(4), np.ones(4), 0.1, 4)
        prog = build_dual_sdp(obs, ONE_BAND)
        assert [(g.dim, g.count) for g in prog.soc_groups] == [(2 * 4 + 1, 1)]

    def test_two_bands_double(self):
        obs = full_obs([0.2], [1.0], 4)
        one, two = build_dual_sdp(obs, ONE_BAND), build_dual_sdp(obs, DEFAULT_BANDS)
        assert len(two.psd_blocks) == 2 * len(one.psd_blocks)
        assert "band1:identity" in two.row_groups


def test_noise_radius_frozen(frozen):
    ref = frozen["noise_radius"]
    obs = PilotObservation(np.arange(ref["pilot_count"]), np.ones(ref["pilot_count"]), ref["noise_variance"], 64)
    assert noise_radius(obs, ref["confidence"]) == pytest.approx(ref["radius"], rel=1e-12)
    assert noise_radius(obs.scaled(0.0)) == 0.0


class TestSolveDual:
    def test_zero_data(self):
        cert = solve_dual(PilotObservation(np.arange(8), np.zeros(8), 0.0, 8), ONE_BAND)
        assert not cert.q.any()

    def test_attains_weight_at_atom(self):
        f0 = 0.225
        cert = solve_dual(full_obs([f0], [0.8 - 0.3j], 16), ONE_BAND)
        assert abs(dual_polynomial(cert, f0)) == pytest.approx(1.0, abs=1e-4)

    def test_scaling_keeps_attainment(self):
        base = full_obs([0.18, 0.26], [1.0, 0.6j], 16)
        a = extract_frequencies(solve_dual(base, ONE_BAND), ONE_BAND)
        b = extract_frequencies(solve_dual(base.scaled(7.5), ONE_BAND), ONE_BAND)
        assert a.size == b.size == 2
        np.testing.assert_allclose(a, b, atol=1e-6)

    @pytest.mark.parametrize("seed", range(6))
    def test_certificate_feasible_and_zero_off_support(self, seed):
        cfg = OFDMConfig(n_subcarriers=256, grid_size=32, pilot_count=16, cp_length=32)
        ch = sample_channel(DEFAULT_BANDS, 3, 2.0 / 32, seed, cfg)
        pos = pilot_positions(cfg, seed)
        obs = observe(ch, cfg, pos, 20.0, seed)
        cert = solve_dual(obs, DEFAULT_BANDS)
        assert band_ratio(cert, DEFAULT_BANDS) <= 1 + 1e-4
        off = np.setdiff1d(np.arange(32), pos)
        assert np.all(cert.q[off] == 0)


class TestDualPolynomial:
    def test_unit_impulse(self):
        q = np.zeros(8, complex)
        q[0] = 1
        np.testing.assert_allclose(dual_polynomial(q, np.linspace(0, 1, 9, endpoint=False)), 1.0)

    def test_normalized_peak(self):
        L, f0 = 12, 0.31
        q = np.exp(-2j * np.pi * f0 * np.arange(L)) / L
        assert dual_polynomial(q, f0) == pytest.approx(1.0)

    @given(st.floats(0, 2 * math.pi), st.integers(0, 2**31))
    def test_phase_invariance(self, phi, seed):
        rng = np.random.default_rng(seed)
        q = rng.normal(size=6) + 1j * rng.normal(size=6)
        f = np.linspace(0, 1, 50, endpoint=False)
        np.testing.assert_allclose(np.abs(dual_polynomial(q * np.exp(1j * phi), f)),
                                   np.abs(dual_polynomial(q, f)), rtol=1e-12, atol=1e-12)


class TestExtract:
    def test_single_atom(self):
        cert = solve_dual(full_obs([0.2], [1.0], 16), ONE_BAND)
        np.testing.assert_allclose(extract_frequencies(cert, ONE_BAND), [0.2], atol=1e-3)

    def test_zero_certificate(self):
        assert extract_frequencies(DualCertificate(np.zeros(8, complex)), ONE_BAND).size == 0

    def test_grid_minimum(self):
        with pytest.raises(ValueError):
            extract_frequencies(DualCertificate(np.ones(4, complex)), ONE_BAND, grid_points_per_band=100)

    def test_two_separated_atoms(self):
        truth = [0.17, 0.17 + 5 / 256]
        ch_obs = observe(
            ChannelRealization.from_frequencies(truth, [1.0, 0.7j], SEPARATION),
            SEPARATION, pilot_positions(SEPARATION, 2), math.inf, 0,
        )
        found = extract_frequencies(solve_dual(ch_obs, ONE_BAND), ONE_BAND)
        assert found.size == 2
        assert np.max(wrap_distance(found, truth)) < 1e-3


class TestEstimate:
    def test_single_path_exact(self):
        est = estimate_channel_weighted(full_obs([0.21], [0.9 + 0.2j], 16), ONE_BAND, SMALL)
        np.testing.assert_allclose(est.frequencies, [0.21], atol=1e-3)
        assert est.gains[0] == pytest.approx(0.9 + 0.2j, rel=1e-6)
        np.testing.assert_allclose(est.delays, est.frequencies * SMALL.grid_size * SMALL.sample_interval)

    def test_empty_estimate(self):
        est = estimate_channel_weighted(PilotObservation(np.arange(16), np.zeros(16), 0.0, 16), ONE_BAND, SMALL)
        assert est.frequencies.size == 0 and est.gains.size == 0

    def test_full_band_matches_unweighted(self):
        obs = full_obs([0.1, 0.45, 0.8], [1.0, -0.6, 0.8j], 16)
        w = estimate_channel_weighted(obs, PriorBands(((0.0, 1.0, 1.0),)), SMALL)
        a = estimate_channel_atomsr(obs, SMALL)
        np.testing.assert_allclose(w.frequencies, a.frequencies, atol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_support_consistency(self, seed):
        ch = sample_channel(ONE_BAND, 2, 4 / 256, seed, SEPARATION)
        obs = observe(ch, SEPARATION, pilot_positions(SEPARATION, seed), math.inf, seed)
        est = estimate_channel_weighted(obs, ONE_BAND, SEPARATION)
        for f in ch.frequencies(SEPARATION):
            assert np.min(wrap_distance(f, est.frequencies)) < 1e-3

    @pytest.mark.parametrize("seed", range(3))
    def test_small_weight_on_empty_band(self, seed):
        """A near-zero weight on the band without support leaves in-band recovery intact."""
        ch = sample_channel(ONE_BAND, 2, 4 / 256, seed, SEPARATION)
        obs = observe(ch, SEPARATION, pilot_positions(SEPARATION, seed), math.inf, seed)
        truth = ch.frequencies(SEPARATION)
        errors = {}
        for d2 in (1.0, 1e-3):
            bands = PriorBands(((0.15, 0.30, 1.0), (0.70, 0.85, d2)))
            est = estimate_channel_weighted(obs, bands, SEPARATION)
            errors[d2] = max(np.min(wrap_distance(f, est.frequencies)) for f in truth)
        assert errors[1e-3] <= max(errors[1.0], 1e-3)
