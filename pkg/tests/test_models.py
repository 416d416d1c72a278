"""Tests for data models."""

import numpy as np
import pytest

from cavsim.models import (
    CompareReport,
    ConfigError,
    EnsembleResult,
    Estimate,
    Histogram,
    IntegratorConfig,
    McmcConfig,
    OracleMoments,
    RunManifest,
    SimConfig,
    SystemState,
    TrajectoryTrace,
)


def make_config(**overrides):
    values = dict(n_atoms=10, nbar=0.1, delta_c=-1.0, omega_r=2.57e-3, t_end=10.0)
    values.update(overrides)
    return SimConfig(**values)


def make_trace(index, theta, failed=False):
    theta = np.asarray(theta, dtype=np.float64)
    times = np.arange(1, theta.shape[0] + 1, dtype=np.float64)
    zeros = np.zeros_like(theta)
    return TrajectoryTrace(
        index=index, times=times, theta=theta, p_s=zeros, kinetic=zeros, photons=zeros, failed=failed
    )


class TestConfigError:
    """Test ConfigError rendering."""

    def test_message_with_line_and_key(self):
        """Test that line and key prefix the reason."""
        error = ConfigError("must be < 0", key="delta_c", line=3)
        assert str(error) == "line 3: delta_c: must be < 0"

    def test_at_line(self):
        """Test relocating an error to a line."""
        error = ConfigError("must be < 0", key="delta_c").at_line(7)
        assert error.line == 7
        assert error.key == "delta_c"
        assert str(error).startswith("line 7: ")

    def test_is_value_error(self):
        """Test that callers catching ValueError see config errors."""
        assert isinstance(ConfigError("x"), ValueError)


class TestSimConfig:
    """Test SimConfig validation."""

    def test_defaults(self):
        """Test default values of optional fields."""
        cfg = make_config()
        assert cfg.dt == 0.1
        assert cfg.temp_init == 0.5
        assert cfg.sample_mode is None
        assert cfg.n_steps == 100
        assert cfg.burn_time == 5.0

    def test_rejected_values(self):
        """Test that constraint violations name their key."""
        cases = [
            ({"delta_c": 1.0}, "delta_c"),
            ({"delta_c": 0.0}, "delta_c"),
            ({"omega_r": 0.0}, "omega_r"),
            ({"omega_r": 1.5}, "omega_r"),
            ({"n_atoms": 0}, "n_atoms"),
            ({"nbar": -0.1}, "nbar"),
            ({"t_end": 0.01}, "t_end"),
            ({"sample_mode": "cubic"}, "sample_mode"),
            ({"scheme": "rk4"}, "scheme"),
            ({"seed": 2**64}, "seed"),
            ({"t_burn": 10.0}, "t_burn"),
        ]

        for overrides, key in cases:
            with pytest.raises(ConfigError) as info:
                make_config(**overrides)
            assert info.value.key == key, f"Expected key {key} for {overrides}"

    def test_integrator_settings(self):
        """Test extraction of the numerical settings."""
        cfg = make_config(dt=0.05, scheme="euler_maruyama")
        settings = IntegratorConfig.from_sim_config(cfg)
        assert settings.dt == 0.05
        assert settings.scheme == "euler_maruyama"
        assert settings.noise


class TestSystemState:
    """Test SystemState."""

    def test_copy_is_independent(self):
        """Test that a copy continues the same random stream on its own."""
        rng = np.random.Generator(np.random.Philox(5))
        state = SystemState(x=np.zeros(3), p=np.ones(3), rng=rng, t=1.0, steps=10, index=2)
        twin = state.copy()
        twin.x[0] = 1.0

        assert state.x[0] == 0.0
        assert twin.n_atoms == 3
        assert state.rng.random() == twin.rng.random()

    def test_is_finite(self):
        """Test detection of NaN momenta."""
        state = SystemState(x=np.zeros(2), p=np.array([0.0, np.nan]), rng=np.random.default_rng(0))
        assert not state.is_finite()


class TestEnsembleResult:
    """Test EnsembleResult helpers."""

    def test_failed_traces_are_excluded(self):
        """Test that stacking skips failed trajectories."""
        traces = [make_trace(0, [0.1, 0.2]), make_trace(1, [0.5, 0.5], failed=True), make_trace(2, [0.3, 0.4])]
        result = EnsembleResult(config=make_config(), traces=traces)

        assert result.failed_indices == [1]
        assert result.stack("theta").shape == (2, 2)
        np.testing.assert_array_equal(result.times, [1.0, 2.0])

    def test_histogram_properties(self):
        """Test bin centers and sample count."""
        hist = Histogram(edges=np.array([0.0, 1.0, 3.0]), counts=np.array([2, 3]), density=np.zeros(2))
        np.testing.assert_array_equal(hist.centers, [0.5, 2.0])
        assert hist.n_samples == 5


class TestMcmcConfig:
    """Test McmcConfig."""

    def test_from_sim_config(self):
        """Test that the sampler inherits physics and MCMC keys."""
        cfg = make_config(mcmc_sweeps=500, mcmc_burn_in=100, mcmc_width=0.5, seed=9)
        mcmc = McmcConfig.from_sim_config(cfg)
        assert (mcmc.n_atoms, mcmc.nbar, mcmc.delta_c) == (10, 0.1, -1.0)
        assert (mcmc.n_sweeps, mcmc.burn_in, mcmc.proposal_width, mcmc.seed) == (500, 100, 0.5, 9)

    def test_burn_in_must_leave_samples(self):
        """Test that burn-in longer than the run is rejected."""
        with pytest.raises(ConfigError):
            McmcConfig(n_atoms=2, nbar=0.1, delta_c=-1.0, n_sweeps=10, burn_in=10)


class TestCompareReport:
    """Test the compare verdict."""

    def test_passed(self):
        """Test that both the z bound and the distance bound apply."""
        moments = OracleMoments(*(Estimate(0.1, 0.01) for _ in range(5)), n_samples=100)
        ok = CompareReport({"theta_sq": 1.0}, 0.05, 3.0, 0.1, moments, moments)
        far = CompareReport({"theta_sq": 1.0}, 0.2, 3.0, 0.1, moments, moments)
        off = CompareReport({"theta_sq": -3.5}, 0.05, 3.0, 0.1, moments, moments)

        assert ok.passed
        assert not far.passed
        assert not off.passed


class TestRunManifest:
    """Test manifest serialization."""

    def test_dict_round_trip(self):
        """Test that to_dict and from_dict agree."""
        manifest = RunManifest(
            config_text="n_atoms = 2\n",
            version="0.1.0",
            master_seed=2**63 + 5,
            trajectory_seeds=[1, 2],
            started="2026-01-01T00:00:00+00:00",
            files={"aggregate.csv": "abc"},
            failed=[1],
        )
        assert RunManifest.from_dict(manifest.to_dict()) == manifest
