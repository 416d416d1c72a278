"""Data models for the cavity self-organization simulator."""

import copy
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import numpy.typing as npt
from typing_extensions import Self, TypeAlias

FloatArray: TypeAlias = npt.NDArray[np.float64]

SAMPLE_MODES = ("linear", "log")
SCHEMES = ("strang_ou", "euler_maruyama")


class CavsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(CavsimError, ValueError):
    """Invalid configuration value, optionally tied to a key and a line."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None) -> None:
        self.reason = message
        self.key = key
        self.line = line
        super().__init__(self._render())

    def _render(self) -> str:
        parts = []
        if self.line is not None:
            parts.append(f"line {self.line}")
        if self.key is not None:
            parts.append(self.key)
        parts.append(self.reason)
        return ": ".join(parts)

    def at_line(self, line: Optional[int]) -> "ConfigError":
        """Return a copy of this error located at ``line``."""
        return ConfigError(self.reason, key=self.key, line=line)


class NumericalError(CavsimError, RuntimeError):
    """Non-finite values appeared during integration."""


class CheckpointError(CavsimError, ValueError):
    """A checkpoint file is truncated, corrupted or of another version."""


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(message, key=key)


@dataclass
class SimConfig:
    """Physical and numerical control parameters, in units of kappa.

    Positions are measured in 1/k, momenta in hbar*k, times in 1/kappa and
    energies in hbar*kappa. ``gamma_hz`` and ``delta_a_over_gamma`` only
    document the physical regime and never enter the dynamics.
    """

    n_atoms: int
    nbar: float
    delta_c: float
    omega_r: float
    t_end: float
    temp_init: float = 0.5
    dt: float = 0.1
    n_traj: int = 1
    seed: int = 0
    sample_mode: Optional[str] = None
    sample_points: int = 1000
    snapshot_points: int = 0
    scheme: str = "strang_ou"
    friction_guard: float = 0.1
    frequency_guard: float = 0.1
    t_burn: Optional[float] = None
    hist_bins: int = 101
    mcmc_sweeps: int = 20000
    mcmc_burn_in: int = 2000
    mcmc_thinning: int = 5
    mcmc_width: float = 1.0
    mcmc_flip_rate: float = 0.05
    gamma_hz: Optional[float] = None
    delta_a_over_gamma: Optional[float] = None

    def __post_init__(self) -> None:
        """Validate the configuration."""
        _require(self.n_atoms >= 1, "n_atoms", "must be at least 1")
        _require(math.isfinite(self.nbar) and self.nbar >= 0, "nbar", "must be >= 0")
        _require(
            self.delta_c < 0,
            "delta_c",
            "must be < 0 (the stationary state is thermal only for red detuning)",
        )
        _require(
            0 < self.omega_r < 1,
            "omega_r",
            "must satisfy 0 < omega_r < 1 (semiclassical regime)",
        )
        _require(self.temp_init >= 0, "temp_init", "must be >= 0")
        _require(self.dt > 0, "dt", "must be > 0")
        _require(self.t_end >= self.dt, "t_end", "must be >= dt")
        _require(self.n_traj >= 1, "n_traj", "must be at least 1")
        _require(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        _require(
            self.sample_mode is None or self.sample_mode in SAMPLE_MODES,
            "sample_mode",
            f"must be one of {', '.join(SAMPLE_MODES)}",
        )
        _require(self.sample_points >= 1, "sample_points", "must be at least 1")
        _require(self.snapshot_points >= 0, "snapshot_points", "must be >= 0")
        _require(self.scheme in SCHEMES, "scheme", f"must be one of {', '.join(SCHEMES)}")
        _require(0 < self.friction_guard < 1, "friction_guard", "must lie in (0, 1)")
        _require(0 < self.frequency_guard < 1, "frequency_guard", "must lie in (0, 1)")
        if self.t_burn is not None:
            _require(0 <= self.t_burn < self.t_end, "t_burn", "must lie in [0, t_end)")
        _require(self.hist_bins >= 2, "hist_bins", "must be at least 2")
        _require(self.mcmc_sweeps >= 1, "mcmc_sweeps", "must be at least 1")
        _require(
            0 <= self.mcmc_burn_in < self.mcmc_sweeps,
            "mcmc_burn_in",
            "must lie in [0, mcmc_sweeps)",
        )
        _require(self.mcmc_thinning >= 1, "mcmc_thinning", "must be at least 1")
        _require(0 < self.mcmc_width <= math.pi, "mcmc_width", "must lie in (0, pi]")
        _require(0 <= self.mcmc_flip_rate <= 1, "mcmc_flip_rate", "must lie in [0, 1]")

    @property
    def n_steps(self) -> int:
        """Number of integration steps needed to reach ``t_end``."""
        return max(1, int(round(self.t_end / self.dt)))

    @property
    def burn_time(self) -> float:
        """Start of the stationary analysis window."""
        return self.t_burn if self.t_burn is not None else self.t_end / 2


@dataclass
class IntegratorConfig:
    """Numerical settings of the stochastic integrator.

    ``noise`` exists so that tests can switch the collective noise off and
    look at pure damping.
    """

    dt: float = 0.1
    scheme: str = "strang_ou"
    friction_guard: float = 0.1
    frequency_guard: float = 0.1
    noise: bool = True

    def __post_init__(self) -> None:
        _require(self.dt > 0, "dt", "must be > 0")
        _require(self.scheme in SCHEMES, "scheme", f"must be one of {', '.join(SCHEMES)}")
        _require(0 < self.friction_guard < 1, "friction_guard", "must lie in (0, 1)")
        _require(0 < self.frequency_guard < 1, "frequency_guard", "must lie in (0, 1)")

    @classmethod
    def from_sim_config(cls, cfg: SimConfig) -> "IntegratorConfig":
        """Extract the integrator settings from a simulation config."""
        return cls(
            dt=cfg.dt,
            scheme=cfg.scheme,
            friction_guard=cfg.friction_guard,
            frequency_guard=cfg.frequency_guard,
        )


@dataclass(frozen=True)
class DerivedRates:
    """Closed-form rates derived from a configuration."""

    gamma_over_kappa: float
    beta_hbar_kappa: float
    temp: float
    nbar_c: float
    friction: float
    diffusion: float
    momentum_var_eq: float


@dataclass
class SystemState:
    """Phase-space point of the N atoms plus the noise stream.

    Positions are stored unwrapped so that displacements keep their winding.
    """

    x: FloatArray
    p: FloatArray
    rng: np.random.Generator
    t: float = 0.0
    steps: int = 0
    index: int = 0

    @property
    def n_atoms(self) -> int:
        return int(self.x.shape[0])

    def is_finite(self) -> bool:
        """Check that every position and momentum is finite."""
        return bool(np.isfinite(self.x).all() and np.isfinite(self.p).all())

    def copy(self) -> Self:
        """Deep copy, including the generator state."""
        return type(self)(
            x=self.x.copy(),
            p=self.p.copy(),
            rng=copy.deepcopy(self.rng),
            t=self.t,
            steps=self.steps,
            index=self.index,
        )


@dataclass
class TrajectoryTrace:
    """Sampled time series of one trajectory."""

    index: int
    times: FloatArray
    theta: FloatArray
    p_s: FloatArray
    kinetic: FloatArray
    photons: FloatArray
    snapshots: List[SystemState] = field(default_factory=list)
    final_state: Optional[SystemState] = None
    failed: bool = False
    error: Optional[str] = None

    @property
    def n_samples(self) -> int:
        return int(self.times.shape[0])


@dataclass
class EnsembleResult:
    """All trajectories of one ensemble run."""

    config: SimConfig
    traces: List[TrajectoryTrace]
    manifest: Optional["RunManifest"] = None

    @property
    def good_traces(self) -> List[TrajectoryTrace]:
        """Trajectories that finished without numerical failure."""
        return [trace for trace in self.traces if not trace.failed]

    @property
    def failed_indices(self) -> List[int]:
        return [trace.index for trace in self.traces if trace.failed]

    @property
    def times(self) -> FloatArray:
        good = self.good_traces
        if not good:
            return np.zeros(0)
        return good[0].times

    def stack(self, column: str) -> FloatArray:
        """Stack one sampled column of all good traces into (n_traj, n_samples)."""
        good = self.good_traces
        if not good:
            return np.zeros((0, 0))
        return np.vstack([getattr(trace, column) for trace in good])


@dataclass
class ThetaSamples:
    """Order-parameter samples tagged with the parameters they came from."""

    theta: FloatArray
    n_atoms: int
    nbar: float
    delta_c: float
    source: str = ""


@dataclass
class Histogram:
    """Normalized histogram (probability density)."""

    edges: FloatArray
    counts: npt.NDArray[np.int64]
    density: FloatArray

    @property
    def centers(self) -> FloatArray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> FloatArray:
        return np.diff(self.edges)

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())


@dataclass
class MsdCurve:
    """Mean squared displacement averaged over atoms and trajectories."""

    times: FloatArray
    msd: FloatArray
    stderr: FloatArray
    per_atom: Optional[FloatArray] = None


@dataclass(frozen=True)
class AlphaFit:
    """Anomalous-diffusion exponent, MSD ~ t**(2 alpha)."""

    alpha: float
    stderr: float
    n_points: int


@dataclass(frozen=True)
class JumpStats:
    """Switching statistics between the two Bragg gratings."""

    n_jumps: int
    mean_residence: float
    jump_times: FloatArray


@dataclass
class CorrelationCurve:
    """Normalized correlation function on a uniform lag grid."""

    lags: FloatArray
    values: FloatArray
    errors: FloatArray
    normalization: float
    kind: str = "g1"


@dataclass
class Spectrum:
    """Two-sided spectral density of Theta(t), angular frequencies in kappa."""

    omega: FloatArray
    density: FloatArray
    window: str
    segment_len: int
    mean_power: float = 0.0

    @property
    def d_omega(self) -> float:
        return float(self.omega[1] - self.omega[0])


@dataclass
class McmcConfig:
    """Settings of the Metropolis sampler of the thermal distribution."""

    n_atoms: int
    nbar: float
    delta_c: float
    omega_r: float = 2.57e-3
    proposal_width: float = 1.0
    n_sweeps: int = 20000
    burn_in: int = 2000
    thinning: int = 5
    seed: int = 0
    flip_rate: float = 0.05

    def __post_init__(self) -> None:
        _require(self.n_atoms >= 1, "n_atoms", "must be at least 1")
        _require(self.nbar >= 0, "nbar", "must be >= 0")
        _require(self.delta_c < 0, "delta_c", "must be < 0")
        _require(0 < self.omega_r < 1, "omega_r", "must satisfy 0 < omega_r < 1")
        _require(0 < self.proposal_width <= math.pi, "proposal_width", "must lie in (0, pi]")
        _require(self.n_sweeps >= 1, "n_sweeps", "must be at least 1")
        _require(0 <= self.burn_in < self.n_sweeps, "burn_in", "must lie in [0, n_sweeps)")
        _require(self.thinning >= 1, "thinning", "must be at least 1")
        _require(0 <= self.flip_rate <= 1, "flip_rate", "must lie in [0, 1]")

    @classmethod
    def from_sim_config(cls, cfg: SimConfig) -> "McmcConfig":
        """Build the sampler settings matching a simulation config."""
        return cls(
            n_atoms=cfg.n_atoms,
            nbar=cfg.nbar,
            delta_c=cfg.delta_c,
            omega_r=cfg.omega_r,
            proposal_width=cfg.mcmc_width,
            n_sweeps=cfg.mcmc_sweeps,
            burn_in=cfg.mcmc_burn_in,
            thinning=cfg.mcmc_thinning,
            seed=cfg.seed,
            flip_rate=cfg.mcmc_flip_rate,
        )


@dataclass
class EquilibriumSamples:
    """Thinned output of the Metropolis sampler."""

    positions: FloatArray
    theta: FloatArray
    momenta: FloatArray
    acceptance_rate: float
    proposal_width: float
    n_atoms: int
    nbar: float
    delta_c: float

    def theta_samples(self) -> ThetaSamples:
        return ThetaSamples(
            theta=self.theta,
            n_atoms=self.n_atoms,
            nbar=self.nbar,
            delta_c=self.delta_c,
            source="mcmc",
        )


@dataclass(frozen=True)
class Estimate:
    """A value with its statistical error."""

    value: float
    error: float


@dataclass
class OracleMoments:
    """Order-parameter moments with jackknife errors."""

    theta_sq: Estimate
    abs_theta: Estimate
    theta_4: Estimate
    g2_0: Estimate
    chi: Estimate
    n_samples: int

    def as_dict(self) -> Dict[str, Estimate]:
        return {
            "theta_sq": self.theta_sq,
            "abs_theta": self.abs_theta,
            "theta_4": self.theta_4,
            "g2_0": self.g2_0,
            "chi": self.chi,
        }


@dataclass
class CompareReport:
    """Outcome of comparing two stationary ensembles."""

    z_scores: Dict[str, float]
    distance: float
    z_bound: float
    distance_bound: float
    first: OracleMoments
    second: OracleMoments

    @property
    def passed(self) -> bool:
        return (
            all(abs(z) < self.z_bound for z in self.z_scores.values())
            and self.distance < self.distance_bound
        )


@dataclass
class RunManifest:
    """Everything needed to reproduce a run bit for bit."""

    config_text: str
    version: str
    master_seed: int
    trajectory_seeds: List[int]
    started: str
    finished: str = ""
    files: Dict[str, str] = field(default_factory=dict)
    failed: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "config_text": self.config_text,
            "version": self.version,
            "master_seed": self.master_seed,
            "trajectory_seeds": list(self.trajectory_seeds),
            "started": self.started,
            "finished": self.finished,
            "files": dict(self.files),
            "failed": list(self.failed),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "RunManifest":
        return cls(
            config_text=str(data["config_text"]),
            version=str(data["version"]),
            master_seed=int(data["master_seed"]),  # type: ignore[call-overload]
            trajectory_seeds=[int(s) for s in data["trajectory_seeds"]],  # type: ignore[attr-defined]
            started=str(data["started"]),
            finished=str(data.get("finished", "")),
            files=dict(data.get("files", {})),  # type: ignore[call-overload]
            failed=[int(i) for i in data.get("failed", [])],  # type: ignore[attr-defined]
        )
