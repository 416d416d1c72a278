"""Tests for stationary and transient diagnostics."""

import math

import numpy as np
import pytest
from scipy import integrate

from cavsim.ensemble import EnsembleRunner, aggregate, scan_point
from cavsim.models import MsdCurve, SimConfig
from cavsim.observables import (
    excess_kurtosis,
    fit_alpha,
    grating_jumps,
    kinetic_temperature,
    kurtosis_series,
    momentum_histogram,
    msd,
    position_histogram,
    susceptibility,
    theta_histogram,
    thermal_momentum_density,
)
from cavsim.physics import critical_pump


class TestMoments:
    """Test temperature, kurtosis and susceptibility."""

    def test_kinetic_temperature(self):
        """Test equipartition on constant momenta."""
        assert kinetic_temperature(np.full(10, 5.0), 0.01) == pytest.approx(0.5)

    def test_kinetic_temperature_needs_samples(self):
        """Test rejection of a single momentum."""
        with pytest.raises(ValueError):
            kinetic_temperature([1.0], 0.01)

    def test_excess_kurtosis_reference_values(self):
        """Test Gaussian, two-point and uniform laws."""
        rng = np.random.default_rng(0)
        test_cases = [
            (rng.standard_normal(10**6), 0.0, 0.02),
            (np.array([-1.0, 1.0] * 50), -2.0, 1e-12),
            (rng.uniform(-1, 1, 10**6), -1.2, 0.02),
        ]

        for samples, expected, tol in test_cases:
            assert excess_kurtosis(samples) == pytest.approx(expected, abs=tol)

    def test_excess_kurtosis_degenerate(self):
        """Test too few samples and zero variance."""
        with pytest.raises(ValueError):
            excess_kurtosis([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            excess_kurtosis(np.ones(10))

    def test_susceptibility(self):
        """Test chi of an ordered and a two-valued sample."""
        assert susceptibility(np.full(20, -0.7)) == pytest.approx(0.0, abs=1e-15)
        assert susceptibility([0.0, 1.0]) == pytest.approx(0.5 - 0.25)


class TestHistograms:
    """Test normalized histograms."""

    def test_theta_histogram_normalized(self):
        """Test unit integral and a bin centered on zero."""
        samples = np.random.default_rng(1).uniform(-1, 1, 5000)
        hist = theta_histogram(samples)

        assert hist.centers.shape == (101,)
        assert hist.centers[50] == pytest.approx(0.0, abs=1e-12)
        assert np.sum(hist.density * hist.widths) == pytest.approx(1.0)
        assert hist.n_samples == 5000

    def test_theta_histogram_mirror_symmetry(self):
        """Test that Theta -> -Theta mirrors the histogram."""
        samples = np.random.default_rng(2).uniform(-0.3, 0.9, 4000)
        hist = theta_histogram(samples, bins=21)
        mirrored = theta_histogram(-samples, bins=21)

        np.testing.assert_array_equal(mirrored.counts, hist.counts[::-1])
        np.testing.assert_allclose(mirrored.density, hist.density[::-1])

    def test_theta_histogram_moments(self):
        """Test <Theta**2> and <|Theta|> from the histogram within the binning error."""
        samples = np.clip(np.random.default_rng(3).normal(0.1, 0.3, 10**5), -1, 1)
        hist = theta_histogram(samples)
        weights = hist.density * hist.widths
        width = float(hist.widths[0])

        assert np.sum(weights * hist.centers**2) == pytest.approx(np.mean(samples**2), abs=2 * width**2)
        assert np.sum(weights * np.abs(hist.centers)) == pytest.approx(np.mean(np.abs(samples)), abs=2 * width**2)

    def test_momentum_histogram_symmetric_range(self):
        """Test that the momentum range is symmetric about zero."""
        hist = momentum_histogram([-1.0, 0.5, 3.0], bins=4)
        assert hist.edges[0] == -3.0
        assert hist.edges[-1] == 3.0

    def test_position_histogram_wraps(self):
        """Test folding of unwrapped positions onto one wavelength."""
        hist = position_histogram([0.1, 0.1 + 2 * math.pi, 0.1 - 4 * math.pi], bins=8)
        assert hist.counts[0] == 3

    def test_thermal_density(self):
        """Test the Maxwell-Boltzmann reference integrates to one."""
        p = np.linspace(-60, 60, 20001)
        density = thermal_momentum_density(p, 0.5, 0.01)
        assert integrate.trapezoid(density, p) == pytest.approx(1.0, rel=1e-6)

    def test_empty_sample(self):
        """Test rejection of an empty sample."""
        with pytest.raises(ValueError):
            theta_histogram([])


class TestDiffusion:
    """Test mean squared displacement and its exponent."""

    def test_ballistic_motion(self):
        """Test MSD = v**2 t**2 and alpha = 1 for free flight."""
        times = np.geomspace(1, 1e4, 40)
        velocities = np.array([[0.5, -1.0, 2.0]])
        initial = np.array([[0.0, 1.0, -2.0]])
        positions = initial[:, np.newaxis, :] + times[np.newaxis, :, np.newaxis] * velocities[:, np.newaxis, :]

        curve = msd(times, positions, initial)
        fit = fit_alpha(curve, (1e2, 1e4))

        np.testing.assert_allclose(curve.msd, np.mean(velocities**2) * times**2)
        assert fit.alpha == pytest.approx(1.0, abs=1e-9)

    def test_diffusive_motion(self):
        """Test alpha = 1/2 for a random walk."""
        rng = np.random.default_rng(7)
        n_times = 1000
        steps = rng.standard_normal((1, n_times, 2000))
        positions = np.cumsum(steps, axis=1)
        times = np.arange(1, n_times + 1, dtype=float)

        fit = fit_alpha(msd(times, positions, np.zeros((1, 2000))), (10, 1000))

        assert fit.alpha == pytest.approx(0.5, abs=0.03)

    def test_drops_initial_time(self):
        """Test that t = 0 is excluded."""
        times = np.array([0.0, 1.0, 2.0])
        positions = np.zeros((2, 3, 4))
        curve = msd(times, positions, np.zeros((2, 4)))
        np.testing.assert_array_equal(curve.times, [1.0, 2.0])

    def test_fit_alpha_power_law(self):
        """Test alpha = 0.3 for MSD = t**0.6 and invariance under rescaling."""
        times = np.geomspace(1, 1e4, 30)
        curve = MsdCurve(times=times, msd=times**0.6, stderr=np.zeros(30))
        scaled = MsdCurve(times=times, msd=37.5 * times**0.6, stderr=np.zeros(30))

        fit = fit_alpha(curve, (1e2, 1e4))

        assert fit.alpha == pytest.approx(0.3, abs=1e-12)
        assert fit_alpha(scaled, (1e2, 1e4)).alpha == pytest.approx(fit.alpha, abs=1e-12)

    def test_static_atoms(self):
        """Test zero MSD for atoms at rest."""
        times = np.arange(1.0, 6.0)
        positions = np.broadcast_to(np.array([0.3, 2.0]), (2, 5, 2))
        np.testing.assert_array_equal(msd(times, positions, positions[:, 0, :]).msd, 0.0)

    def test_fit_needs_points(self):
        """Test rejection of a sparse window."""
        curve = MsdCurve(times=np.arange(1.0, 4.0), msd=np.ones(3), stderr=np.zeros(3))
        with pytest.raises(ValueError):
            fit_alpha(curve, (1, 3))

    def test_wrapped_positions_warn(self, caplog):
        """Test the warning on positions folded into [0, 2 pi)."""
        times = np.array([1.0, 2.0])
        positions = np.array([[[6.2], [0.1]]])
        msd(times, positions, np.array([[6.0]]))
        assert "wrapped" in caplog.text


class TestGratingJumps:
    """Test switching between the two gratings."""

    def test_constant_theta(self):
        """Test that a fixed grating never jumps."""
        times = np.arange(100.0)
        stats = grating_jumps(times, np.full(100, 0.8))
        assert stats.n_jumps == 0
        assert stats.mean_residence == pytest.approx(99.0)

    def test_square_wave(self):
        """Test jumps every half period."""
        times = np.arange(400.0)
        theta = np.where((times // 50) % 2 == 0, 0.7, -0.7)
        stats = grating_jumps(times, theta)

        assert stats.n_jumps == 7
        np.testing.assert_array_equal(stats.jump_times, 50.0 * np.arange(1, 8))

    def test_jitter_is_ignored(self):
        """Test that excursions inside the band do not count."""
        theta = np.array([0.5, 0.1, -0.2, 0.1, 0.6, -0.1])
        assert grating_jumps(np.arange(6.0), theta).n_jumps == 0


class TestKurtosisSeries:
    """Test the kurtosis table over snapshot times."""

    def test_columns_and_errors(self):
        """Test one row per snapshot with the Gaussian standard error."""
        rng = np.random.default_rng(3)
        momenta = [rng.standard_normal(600), rng.uniform(-1, 1, 600)]
        table = kurtosis_series([1.0, 10.0], momenta, 0.01)

        assert list(table.columns) == ["t", "excess_kurtosis", "stderr", "kinetic_temperature"]
        assert table["stderr"].iloc[0] == pytest.approx(math.sqrt(24 / 600))
        assert table["excess_kurtosis"].iloc[1] < -0.8


def _snapshot_arrays(result):
    good = sorted(result.good_traces, key=lambda trace: trace.index)
    times = np.array([snap.t for snap in good[0].snapshots])
    positions = np.array([[snap.x for snap in trace.snapshots] for trace in good])
    momenta = np.array([[snap.p for snap in trace.snapshots] for trace in good])
    return times, positions, momenta


@pytest.mark.slow
class TestQuench:
    """Transient dynamics after switching the pump on above threshold."""

    def test_prethermal_plateau(self):
        """Test the plateau of <|Theta|> near 0.6 and its non-Gaussian momenta."""
        cfg = SimConfig(
            n_atoms=200,
            nbar=4.0 * critical_pump(-1.0),
            delta_c=-1.0,
            omega_r=2.57e-3,
            t_end=1e5,
            temp_init=0.5,
            dt=0.5,
            n_traj=50,
            seed=5,
            sample_mode="log",
            sample_points=20,
            snapshot_points=5,
        )
        result = EnsembleRunner().run_ensemble(cfg)
        table = aggregate(result)

        def at(t):
            return float(table["mean_abs_theta"].iloc[int(np.argmin(np.abs(table["t"] - t)))])

        assert at(3e2) > 0.5
        plateau = at(1e3)
        assert 0.55 <= plateau <= 0.7
        assert abs(at(1e4) - plateau) < 0.1 * plateau

        times, _, momenta = _snapshot_arrays(result)
        window = (times >= 1e3) & (times <= 1e4)
        series = kurtosis_series(
            times[window], [momenta[:, k, :] for k in np.flatnonzero(window)], cfg.omega_r
        )
        assert np.any(np.abs(series["excess_kurtosis"]) > 5 * series["stderr"])

    def test_diffusion_exponent_ordering(self):
        """Test superdiffusion below threshold and subdiffusion well above it."""
        base = SimConfig(
            n_atoms=50,
            nbar=0.0,
            delta_c=-1.0,
            omega_r=0.1,
            t_end=1e4,
            n_traj=8,
            seed=13,
            sample_mode="log",
            sample_points=10,
            snapshot_points=10,
        )
        alphas = []
        for nbar_rel in (0.5, 4.0):
            result = EnsembleRunner().run_ensemble(scan_point(base, "nbar_rel", nbar_rel))
            times, positions, _ = _snapshot_arrays(result)
            curve = msd(times, positions, positions[:, 0, :])
            alphas.append(fit_alpha(curve, (1e2, 1e4)).alpha)

        assert alphas[0] > 0.5 > alphas[1]
