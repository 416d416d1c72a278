"""Tests for coherence functions and spectra."""

import math

import numpy as np
import pytest
from scipy import signal

from cavsim.ensemble import EnsembleRunner, scan_point
from cavsim.models import SimConfig
from cavsim.physics import well_frequency
from cavsim.spectral import default_segment, g1, g2, sampling_interval, sideband_position, spectrum


class TestSamplingGrid:
    """Test the uniform-grid check."""

    def test_uniform_grid(self):
        """Test spacing of a uniform grid."""
        assert sampling_interval(0.1 * np.arange(1, 11)) == pytest.approx(0.1)

    def test_log_grid_rejected(self):
        """Test that log-spaced samples are refused."""
        with pytest.raises(ValueError):
            sampling_interval(np.geomspace(1, 100, 10))


class TestCorrelations:
    """Test g1 and g2."""

    def test_constant_signal(self):
        """Test perfect coherence of a frozen grating."""
        times = np.arange(1.0, 101.0)
        traces = np.vstack([np.full(100, 0.6), np.full(100, -0.6)])

        first = g1(times, traces, 10)
        second = g2(times, traces, 10)

        np.testing.assert_allclose(first.values, 1.0)
        np.testing.assert_allclose(first.errors, 0.0, atol=1e-12)
        np.testing.assert_allclose(second.values, 1.0)
        np.testing.assert_allclose(first.lags, np.arange(11.0))

    def test_gaussian_noise_bunching(self):
        """Test g2(0) = 3 and g2(tau) = 1 for white Gaussian noise."""
        rng = np.random.default_rng(2)
        times = np.arange(1.0, 20001.0)
        traces = rng.standard_normal((8, 20000))

        curve = g2(times, traces, 5)

        assert curve.values[0] == pytest.approx(3.0, abs=0.1)
        np.testing.assert_allclose(curve.values[1:], 1.0, atol=0.05)
        assert np.all(np.isfinite(curve.errors))

    def test_single_trajectory_has_no_errors(self):
        """Test NaN errors without an ensemble."""
        times = np.arange(1.0, 51.0)
        curve = g1(times, np.random.default_rng(0).standard_normal(50), 3)
        assert np.all(np.isnan(curve.errors))

    def test_g2_decays_to_one_for_ou_input(self):
        """Test g2(0) = 3 and g2 -> 1 at lags beyond the correlation time."""
        rng = np.random.default_rng(9)
        decay = 0.8
        noise = rng.standard_normal((16, 50000))
        traces = signal.lfilter([math.sqrt(1 - decay**2)], [1.0, -decay], noise, axis=1)
        times = 0.1 * np.arange(1, 50001)

        curve = g2(times, traces, 60)

        assert curve.values[0] == pytest.approx(3.0, abs=0.1)
        np.testing.assert_allclose(curve.values[30:], 1.0, atol=0.05)

    def test_g1_of_cosine(self):
        """Test the g1 amplitude <Theta**2> / <|Theta|>**2 = pi**2 / 8 of a cosine."""
        dt = 0.01
        omega0 = 2 * math.pi
        times = dt * np.arange(1, 100001)
        curve = g1(times, np.cos(omega0 * times), 200)

        assert curve.values[0] == pytest.approx(math.pi**2 / 8, rel=1e-3)
        assert curve.values[50] == pytest.approx(-math.pi**2 / 8, rel=1e-3)
        assert curve.values[100] == pytest.approx(math.pi**2 / 8, rel=1e-3)

    def test_duplicated_traces_keep_values(self):
        """Test that repeating every trajectory changes errors only."""
        rng = np.random.default_rng(10)
        times = 0.5 * np.arange(1, 2049)
        traces = rng.standard_normal((3, 2048))
        doubled = np.vstack([traces, traces])

        for estimator in (g1, g2):
            np.testing.assert_allclose(estimator(times, doubled, 20).values, estimator(times, traces, 20).values)
        np.testing.assert_allclose(
            spectrum(times, doubled, segment_len=256).density, spectrum(times, traces, segment_len=256).density
        )

    def test_lag_out_of_range(self):
        """Test rejection of a lag beyond the trace."""
        with pytest.raises(ValueError):
            g1(np.arange(1.0, 11.0), np.ones(10), 10)


class TestSpectrum:
    """Test the Welch spectrum."""

    def test_parseval(self):
        """Test that the density integrates to the mean segment variance."""
        rng = np.random.default_rng(4)
        traces = 0.3 + rng.standard_normal((3, 4096))
        times = 0.5 * np.arange(1, 4097)

        spec = spectrum(times, traces, segment_len=256, window="boxcar", overlap=0.0)

        segments = traces.reshape(3, 16, 256)
        expected = float(np.mean(segments.var(axis=2)))
        assert np.sum(spec.density) * spec.d_omega == pytest.approx(expected, rel=1e-10)
        assert spec.mean_power == pytest.approx(float(np.mean(segments.mean(axis=2) ** 2)))

    def test_symmetric_and_centered(self):
        """Test omega grid centered at zero and a symmetric density for real input."""
        rng = np.random.default_rng(5)
        times = 0.1 * np.arange(1, 2049)
        spec = spectrum(times, rng.standard_normal((2, 2048)), segment_len=512)

        assert spec.omega.shape == (512,)
        assert spec.omega[256] == 0.0
        assert spec.d_omega == pytest.approx(2 * math.pi / (512 * 0.1))
        np.testing.assert_allclose(spec.density[1:], spec.density[1:][::-1], rtol=1e-10)

    def test_default_segment(self):
        """Test the default segment against the trace length."""
        test_cases = [(4, 2), (101, 32), (500, 128), (512, 256), (10**5, 1024)]

        for n_samples, expected in test_cases:
            assert default_segment(n_samples) == expected, n_samples
        with pytest.raises(ValueError):
            default_segment(3)

        times = 0.1 * np.arange(1, 501)
        spec = spectrum(times, np.random.default_rng(11).standard_normal((2, 500)))
        assert spec.segment_len == 128
        assert spec.omega.shape == (128,)

    def test_mean_power_over_overlapping_segments(self):
        """Test that the coherent power uses the same segments as the density."""
        times = np.arange(1.0, 1025.0)
        trace = np.where(np.arange(1024) < 512, 1.0, -1.0)

        overlapping = spectrum(times, trace, segment_len=256, overlap=0.5)
        disjoint = spectrum(times, trace, segment_len=256, overlap=0.0)

        assert overlapping.mean_power == pytest.approx(6 / 7)
        assert disjoint.mean_power == pytest.approx(1.0)

    def test_sidebands_of_oscillation(self):
        """Test that an oscillating Theta shows two symmetric sidebands."""
        rng = np.random.default_rng(6)
        dt = 0.5
        times = dt * np.arange(1, 8193)
        omega0 = 2 * math.pi * 40 / (1024 * dt)
        traces = np.cos(omega0 * times + rng.uniform(0, 2 * math.pi, (4, 1))) + 0.1 * rng.standard_normal((4, 8192))

        spec = spectrum(times, traces, segment_len=1024)
        negative, positive = sideband_position(spec, min_omega=0.5 * omega0)

        assert positive == pytest.approx(omega0, abs=spec.d_omega)
        assert negative == pytest.approx(-omega0, abs=spec.d_omega)

    def test_invalid_arguments(self):
        """Test segment length and window validation."""
        times = np.arange(1.0, 1025.0)
        data = np.zeros(1024)
        cases = [
            dict(segment_len=100),
            dict(segment_len=2048),
            dict(segment_len=256, window="kaiser"),
            dict(segment_len=256, overlap=1.0),
        ]

        for kwargs in cases:
            with pytest.raises(ValueError):
                spectrum(times, data, **kwargs)


@pytest.mark.slow
class TestSimulatedSpectrum:
    """Spectra of simulated Theta(t) just above threshold."""

    def _spectrum(self, nbar_rel):
        base = SimConfig(
            n_atoms=100,
            nbar=0.0,
            delta_c=-1.0,
            omega_r=0.1,
            t_end=4000.0,
            t_burn=2000.0,
            n_traj=8,
            seed=11,
            sample_mode="linear",
            sample_points=40000,
        )
        cfg = scan_point(base, "nbar_rel", nbar_rel)
        result = EnsembleRunner().run_ensemble(cfg)
        keep = result.times > cfg.burn_time
        return cfg, spectrum(result.times[keep], result.stack("theta")[:, keep], segment_len=2048)

    def test_sidebands_move_out_with_pump(self):
        """Test symmetric sidebands at 1.1 nbar_c that move outwards at 1.5 nbar_c."""
        cfg, near = self._spectrum(1.1)
        _, far = self._spectrum(1.5)
        cutoff = 0.2 * well_frequency(cfg)

        near_neg, near_pos = sideband_position(near, min_omega=cutoff)
        far_neg, far_pos = sideband_position(far, min_omega=cutoff)

        assert math.isfinite(near_neg) and math.isfinite(near_pos)
        assert abs(near_neg + near_pos) <= 2 * near.d_omega
        assert near.mean_power > 0
        assert math.isfinite(far_pos)
        assert far_pos > near_pos
