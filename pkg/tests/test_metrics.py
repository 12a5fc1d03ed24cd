"""Tests for ring constellations, MI estimation, and SNR estimation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from wgnlink.metrics import (RingConstellation, build_ring_constellation,
                             estimate_mi, estimate_mi_discrete, estimate_snr,
                             qam16_constellation, quantize_to_rings)
from wgnlink.signals import ComplexSignal, generate_wgn


def _awgn_pair(n, snr_db, seed, power=1.0):
    """Constructed reference/received pair at exactly the requested SNR."""
    rng = np.random.default_rng(seed)
    x = np.sqrt(power / 2) * (rng.standard_normal(n)
                              + 1j * rng.standard_normal(n))
    nv = power / 10 ** (snr_db / 10)
    y = x + np.sqrt(nv / 2) * (rng.standard_normal(n)
                               + 1j * rng.standard_normal(n))
    return (ComplexSignal(x, 30e9), ComplexSignal(y, 30e9))


def _discrete_awgn_mi(points, noise_var, half_width=None, n_grid=220):
    """Numerical-integration oracle: MI of a uniform discrete constellation
    over a complex AWGN channel, via a 2-D grid."""
    points = np.asarray(points, dtype=complex)
    k = points.size
    if half_width is None:
        half_width = np.max(np.abs(points)) + 5 * np.sqrt(noise_var)
    axis = np.linspace(-half_width, half_width, n_grid)
    dxdy = (axis[1] - axis[0]) ** 2
    yy = axis[None, :] + 1j * axis[:, None]
    total = 0.0
    for x in points:
        p_yx = np.exp(-np.abs(yy - x) ** 2 / noise_var) / (np.pi * noise_var)
        p_y = np.zeros_like(p_yx)
        for xp in points:
            p_y += np.exp(-np.abs(yy - xp) ** 2 / noise_var) / (np.pi * noise_var)
        p_y /= k
        mask = p_yx > 1e-300
        total += np.sum(p_yx[mask] * np.log2(p_yx[mask] / p_y[mask])) * dxdy
    return total / k


class TestBuildRingConstellation:
    def test_default_16_rings(self):
        rings = build_ring_constellation(16)
        assert rings.n_rings == 16
        assert rings.phase_points == 64
        assert np.all(np.diff(rings.radii) > 0)
        assert rings.mean_power == pytest.approx(1.0, rel=1e-9)

    def test_single_ring_degenerate(self):
        rings = build_ring_constellation(1, mean_power=2.0)
        # one equiprobable annulus: conditional mean is the Rayleigh mean,
        # renormalized so the ring power equals mean_power
        assert rings.radii[0] == pytest.approx(np.sqrt(2.0), rel=1e-9)

    def test_two_rings_against_integration_oracle(self):
        sigma = np.sqrt(0.5)
        median = sigma * np.sqrt(2 * np.log(2))

        def pdf(r):
            return (r / sigma ** 2) * np.exp(-r ** 2 / (2 * sigma ** 2))

        means = []
        for a, b in ((0.0, median), (median, np.inf)):
            num, _ = integrate.quad(lambda r: r * pdf(r), a, b)
            den, _ = integrate.quad(pdf, a, b)
            means.append(num / den)
        means = np.array(means)
        means *= np.sqrt(1.0 / np.mean(means ** 2))
        rings = build_ring_constellation(2, 1.0)
        assert rings.radii == pytest.approx(means, rel=1e-6)

    def test_invalid_ring_count(self):
        with pytest.raises(ValueError):
            build_ring_constellation(0)

    @settings(max_examples=20, deadline=None)
    @given(n=st.integers(min_value=1, max_value=64),
           p=st.floats(min_value=0.01, max_value=50.0))
    def test_power_normalization(self, n, p):
        rings = build_ring_constellation(n, mean_power=p)
        assert rings.mean_power == pytest.approx(p, rel=1e-9)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            RingConstellation(np.array([1.0, 0.5]), np.array([0.5, 0.5]), 64)
        with pytest.raises(ValueError):
            RingConstellation(np.array([0.5, 1.0]), np.array([0.6, 0.6]), 64)
        with pytest.raises(ValueError):
            RingConstellation(np.array([0.5, 1.0]), np.array([0.5, 0.5]), 2)


class TestQuantizeToRings:
    def test_exact_point_maps_to_itself(self):
        rings = build_ring_constellation(4, 1.0, phase_points=8)
        pt = rings.radii[2] * np.exp(1j * 2 * np.pi * 3 / 8)
        sig = ComplexSignal(np.array([pt]), 1.0)
        out = quantize_to_rings(sig, rings)
        assert out[0] == pytest.approx(pt, rel=1e-12)

    def test_midpoint_ties_to_lower_ring(self):
        rings = build_ring_constellation(4, 1.0, phase_points=8)
        mid = 0.5 * (rings.radii[1] + rings.radii[2])
        sig = ComplexSignal(np.array([mid + 0j]), 1.0)
        out = quantize_to_rings(sig, rings)
        assert abs(out[0]) == pytest.approx(rings.radii[1], rel=1e-12)

    def test_occupancy_matches_rayleigh_cdf_oracle(self):
        # nearest-ring decision boundaries are radius midpoints, so the
        # expected occupancy is the Rayleigh probability of each midpoint
        # cell (close to, but not exactly, 1/16 for the edge rings)
        rings = build_ring_constellation(16, 1.0)
        bounds = np.concatenate([[0.0],
                                 0.5 * (rings.radii[1:] + rings.radii[:-1]),
                                 [np.inf]])
        cdf = 1.0 - np.exp(-bounds ** 2)  # Rayleigh CDF, sigma^2 = 1/2
        expected = np.diff(cdf)
        sig = generate_wgn(1_000_000, 1.0, 1.0, seed=1)
        mags = np.abs(quantize_to_rings(sig, rings))
        for r, exp_occ in zip(rings.radii, expected):
            occ = np.mean(np.isclose(mags, r))
            assert occ == pytest.approx(exp_occ, abs=0.002)
        assert np.all(np.abs(expected - 1 / 16) < 0.015)


class TestEstimateMi:
    def test_noiseless_reaches_cap(self):
        rings = build_ring_constellation(16, 1.0)
        sig = generate_wgn(50_000, 30e9, 1.0, seed=2)
        mi = estimate_mi(sig, sig, rings)
        assert mi == pytest.approx(np.log2(16 * 64), abs=0.01)

    def test_10db_against_integration_oracle(self):
        rings = build_ring_constellation(16, 1.0)
        x, y = _awgn_pair(300_000, 10.0, seed=3)
        mi = estimate_mi(x, y, rings)
        # 2-D integration oracle for the 16x64-point constellation over AWGN;
        # by phase symmetry one representative input per ring suffices, while
        # the output marginal uses all 1024 points
        nv = 0.1
        pts = rings.points()
        half = np.max(np.abs(pts)) + 5 * np.sqrt(nv)
        axis = np.linspace(-half, half, 320)
        dxdy = (axis[1] - axis[0]) ** 2
        yy = (axis[None, :] + 1j * axis[:, None]).ravel()
        p_y = np.zeros(yy.size)
        for p in pts:
            p_y += np.exp(-np.abs(yy - p) ** 2 / nv)
        p_y /= len(pts) * np.pi * nv
        oracle = 0.0
        for r in rings.radii:
            p_yx = np.exp(-np.abs(yy - r) ** 2 / nv) / (np.pi * nv)
            mask = p_yx > 1e-300
            oracle += np.sum(p_yx[mask]
                             * np.log2(p_yx[mask] / p_y[mask])) * dxdy
        oracle /= rings.n_rings
        assert oracle == pytest.approx(np.log2(1 + 10.0), abs=0.1)
        assert abs(mi - oracle) < 0.15

    def test_independent_signals_near_zero(self):
        rings = build_ring_constellation(16, 1.0)
        x = generate_wgn(200_000, 30e9, 1.0, seed=4)
        y = generate_wgn(200_000, 30e9, 1.0, seed=5)
        assert estimate_mi(x, y, rings) < 0.05

    def test_monotone_in_snr(self):
        rings = build_ring_constellation(16, 1.0)
        mis = []
        for snr in range(0, 26):
            x, y = _awgn_pair(120_000, float(snr), seed=100 + snr)
            mis.append(estimate_mi(x, y, rings))
        assert np.all(np.diff(mis) > 0)

    def test_lower_bound_property(self):
        rings = build_ring_constellation(16, 1.0)
        for snr in (0.0, 7.0, 13.0, 20.0, 25.0):
            x, y = _awgn_pair(200_000, snr, seed=int(snr) + 50)
            mi = estimate_mi(x, y, rings)
            assert mi <= np.log2(1 + 10 ** (snr / 10)) + 0.05

    def test_scale_invariance(self):
        rings = build_ring_constellation(16, 1.0)
        x, y = _awgn_pair(150_000, 15.0, seed=6)
        base = estimate_mi(x, y, rings)
        c = 2.7 * np.exp(0.4j)
        scaled = estimate_mi(
            ComplexSignal(c * x.samples, x.sample_rate),
            ComplexSignal(c * y.samples, y.sample_rate), rings)
        assert abs(scaled - base) < 0.01

    def test_ring_count_convergence(self):
        x, y = _awgn_pair(200_000, 20.0, seed=7)
        mi = {n: estimate_mi(x, y, build_ring_constellation(n, 1.0))
              for n in (8, 16, 32)}
        assert mi[16] - mi[8] >= -0.01
        assert mi[32] - mi[16] <= 0.05

    def test_phase_point_convergence(self):
        x, y = _awgn_pair(150_000, 15.0, seed=8)
        a = estimate_mi(x, y, build_ring_constellation(16, 1.0, 64))
        b = estimate_mi(x, y, build_ring_constellation(16, 1.0, 128))
        assert abs(a - b) < 0.01

    def test_length_mismatch_rejected(self):
        rings = build_ring_constellation(4, 1.0)
        a = generate_wgn(100, 1.0, 1.0, seed=0)
        b = generate_wgn(99, 1.0, 1.0, seed=0)
        with pytest.raises(ValueError):
            estimate_mi(a, b, rings)


class TestEstimateMiDiscrete:
    def test_noiseless_16qam_is_4_bits(self):
        pts = qam16_constellation()
        rng = np.random.default_rng(9)
        sym = pts[rng.integers(0, 16, 50_000)]
        mi = estimate_mi_discrete(sym, ComplexSignal(sym, 30e9), pts)
        assert mi == pytest.approx(4.0, abs=1e-6)

    def test_20db_against_integration_oracle(self):
        pts = qam16_constellation()
        rng = np.random.default_rng(10)
        sym = pts[rng.integers(0, 16, 400_000)]
        nv = 10 ** (-20 / 10)
        noise = np.sqrt(nv / 2) * (rng.standard_normal(len(sym))
                                   + 1j * rng.standard_normal(len(sym)))
        mi = estimate_mi_discrete(sym, ComplexSignal(sym + noise, 30e9), pts)
        oracle = _discrete_awgn_mi(pts, nv)
        assert mi == pytest.approx(oracle, abs=0.05)

    def test_wgn_exceeds_16qam_at_high_snr(self):
        snr_db = 25.0
        pts = qam16_constellation()
        rng = np.random.default_rng(11)
        sym = pts[rng.integers(0, 16, 200_000)]
        nv = 10 ** (-snr_db / 10)
        noise = np.sqrt(nv / 2) * (rng.standard_normal(len(sym))
                                   + 1j * rng.standard_normal(len(sym)))
        qam_mi = estimate_mi_discrete(sym, ComplexSignal(sym + noise, 30e9),
                                      pts)
        x, y = _awgn_pair(200_000, snr_db, seed=12)
        wgn_mi = estimate_mi(x, y, build_ring_constellation(16, 1.0))
        assert qam_mi < 4.0 + 1e-9
        assert wgn_mi > qam_mi + 1.0


class TestEstimateSnr:
    def test_identical_signals_capped(self):
        x = generate_wgn(10_000, 1.0, 1.0, seed=13)
        assert estimate_snr(x, x) == 80.0

    def test_constructed_10db(self):
        x, y = _awgn_pair(1_000_000, 10.0, seed=14)
        assert estimate_snr(x, y) == pytest.approx(10.0, abs=0.1)

    def test_pure_gain_capped(self):
        x = generate_wgn(10_000, 1.0, 1.0, seed=15)
        y = ComplexSignal(2.0 * x.samples, 1.0)
        assert estimate_snr(x, y) == 80.0

    @settings(max_examples=15, deadline=None)
    @given(snr=st.floats(min_value=0.0, max_value=40.0),
           seed=st.integers(min_value=0, max_value=10_000))
    def test_tracks_construction(self, snr, seed):
        x, y = _awgn_pair(100_000, snr, seed=seed)
        assert estimate_snr(x, y) == pytest.approx(snr, abs=0.3)
