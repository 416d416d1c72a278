"""Stochastic integrator for the atomic motion in the pumped cavity.

The Ito equations of motion are

    dx_i = 2 omega_r p_i dt
    dp_i = F_i dt + g sin(x_i) P_s dt + sqrt(2 nbar / N) sin(x_i) dW

with one Wiener process W shared by all atoms. The noise amplitude depends on
positions only and acts on momenta, so Ito and Stratonovich readings coincide
and no spurious drift appears.
"""

import logging
import math
from typing import Callable, Optional, Union

import numpy as np
import numpy.typing as npt

from .models import (
    ConfigError,
    FloatArray,
    IntegratorConfig,
    NumericalError,
    SimConfig,
    SystemState,
    TrajectoryTrace,
)
from .physics import derive_rates, force_array, photon_proxy, well_frequency
from .utils import sample_schedule, snapshot_schedule

Observer = Callable[[float, float, float, float, float, Optional[SystemState]], None]


def ou_propagate(
    q: Union[float, FloatArray],
    decay_rate: float,
    sigma_sq: float,
    dt: float,
    xi: Union[float, FloatArray],
) -> Union[float, FloatArray]:
    """
    Exact one-step update of dq = -a q dt + sigma dW.

    Args:
        q: Current value(s)
        decay_rate: a >= 0
        sigma_sq: Noise variance rate sigma**2
        dt: Time step
        xi: Standard normal draw(s)

    Returns:
        q * exp(-a dt) + sigma * sqrt((1 - exp(-2 a dt)) / (2 a)) * xi
    """
    if decay_rate > 0.0:
        decay = math.exp(-decay_rate * dt)
        variance = sigma_sq * -math.expm1(-2.0 * decay_rate * dt) / (2.0 * decay_rate)
    else:
        decay = 1.0
        variance = sigma_sq * dt
    return q * decay + math.sqrt(variance) * xi


class StochasticIntegrator:
    """Advances SystemState under the cavity Langevin dynamics."""

    def __init__(
        self,
        cfg: SimConfig,
        integrator: Optional[IntegratorConfig] = None,
        debug: bool = False,
    ) -> None:
        """
        Initialize the integrator.

        Args:
            cfg: Physical parameters
            integrator: Numerical settings, taken from ``cfg`` when omitted
            debug: Enable debug logging
        """
        self.cfg = cfg
        self.settings = integrator or IntegratorConfig.from_sim_config(cfg)
        self.rates = derive_rates(cfg)
        self.debug = debug
        self.logger = logging.getLogger(__name__)

        if debug:
            logging.basicConfig(level=logging.DEBUG)

    def check_stability(self) -> None:
        """Reject time steps that under-resolve the friction or the trap frequency."""
        dt = self.settings.dt
        friction_step = abs(self.rates.friction) * dt
        if friction_step > self.settings.friction_guard:
            raise ConfigError(
                f"|g|*dt = {friction_step:.3g} exceeds friction_guard "
                f"{self.settings.friction_guard}",
                key="dt",
            )
        frequency_step = well_frequency(self.cfg) * dt
        if frequency_step > self.settings.frequency_guard:
            raise ConfigError(
                f"well frequency*dt = {frequency_step:.3g} exceeds frequency_guard "
                f"{self.settings.frequency_guard}",
                key="dt",
            )

    def hamiltonian_substep(self, state: SystemState, dt: float) -> SystemState:
        """
        One velocity-Verlet step of the conservative dynamics.

        Args:
            state: Current state
            dt: Time step

        Returns:
            New state, time and RNG untouched
        """
        cfg = self.cfg
        p_half = state.p + (0.5 * dt) * force_array(state.x, cfg.nbar, cfg.delta_c)
        x_new = state.x + (2.0 * cfg.omega_r * dt) * p_half
        p_new = p_half + (0.5 * dt) * force_array(x_new, cfg.nbar, cfg.delta_c)
        if not (np.isfinite(x_new).all() and np.isfinite(p_new).all()):
            raise NumericalError(f"non-finite state in Hamiltonian substep at t={state.t}")
        return SystemState(
            x=x_new, p=p_new, rng=state.rng, t=state.t, steps=state.steps, index=state.index
        )

    def dissipator_substep(
        self, state: SystemState, dt: float, rng: Optional[np.random.Generator] = None
    ) -> SystemState:
        """
        Exact collective friction and noise with positions frozen.

        Only the momentum component along s = sin(x) changes; it follows an
        Ornstein-Uhlenbeck process with decay |g| S2 and noise rate 2 nbar S2,
        where S2 = mean sin(x)**2.

        Args:
            state: Current state
            dt: Time step
            rng: Noise stream, defaults to the state's own

        Returns:
            New state with updated momenta
        """
        nbar = self.cfg.nbar
        if nbar == 0.0:
            return state

        s = np.sin(state.x)
        s_norm_sq = float(np.dot(s, s))
        if s_norm_sq == 0.0:
            return state

        s2 = s_norm_sq / state.n_atoms
        decay_rate = abs(self.rates.friction) * s2
        unit = s / math.sqrt(s_norm_sq)
        q = float(np.dot(unit, state.p))

        if self.settings.noise:
            xi = (rng or state.rng).standard_normal()
            q_new = ou_propagate(q, decay_rate, 2.0 * nbar * s2, dt, xi)
        else:
            q_new = ou_propagate(q, decay_rate, 0.0, dt, 0.0)

        p_new = state.p + (q_new - q) * unit
        return SystemState(
            x=state.x, p=p_new, rng=state.rng, t=state.t, steps=state.steps, index=state.index
        )

    def _euler_maruyama(self, state: SystemState, dt: float) -> SystemState:
        cfg = self.cfg
        s = np.sin(state.x)
        p_s = float(np.mean(s * state.p))
        drift = force_array(state.x, cfg.nbar, cfg.delta_c) + self.rates.friction * p_s * s
        p_new = state.p + dt * drift
        if self.settings.noise and cfg.nbar > 0.0:
            kick = math.sqrt(2.0 * self.rates.diffusion * dt) * state.rng.standard_normal()
            p_new = p_new + kick * s
        x_new = state.x + (2.0 * cfg.omega_r * dt) * state.p
        return SystemState(
            x=x_new, p=p_new, rng=state.rng, t=state.t, steps=state.steps, index=state.index
        )

    def step(self, state: SystemState) -> SystemState:
        """
        Advance by one time step.

        The default scheme is the symmetric splitting
        dissipator(dt/2) . hamiltonian(dt) . dissipator(dt/2).

        Args:
            state: Current state

        Returns:
            State one step later
        """
        dt = self.settings.dt
        if self.settings.scheme == "euler_maruyama":
            new = self._euler_maruyama(state, dt)
        else:
            new = self.dissipator_substep(state, 0.5 * dt)
            new = self.hamiltonian_substep(new, dt)
            new = self.dissipator_substep(new, 0.5 * dt)

        new.steps = state.steps + 1
        new.t = new.steps * dt
        if not new.is_finite():
            raise NumericalError(f"non-finite state at t={new.t} (step {new.steps})")
        return new

    def total_steps(self, t_end: Optional[float] = None) -> int:
        """Number of steps to reach ``t_end``, at least one."""
        final = t_end if t_end is not None else self.cfg.t_end
        return max(1, int(round(final / self.settings.dt)))

    def sample_steps(
        self,
        t_end: Optional[float] = None,
        sample_mode: Optional[str] = None,
        sample_points: Optional[int] = None,
    ) -> npt.NDArray[np.int64]:
        """Global step numbers at which a trajectory up to ``t_end`` is sampled."""
        cfg = self.cfg
        return sample_schedule(
            sample_mode or cfg.sample_mode or "linear",
            sample_points if sample_points is not None else cfg.sample_points,
            self.total_steps(t_end),
        )

    def snapshot_steps(
        self, t_end: Optional[float] = None, snapshot_points: Optional[int] = None
    ) -> npt.NDArray[np.int64]:
        """Global step numbers of full-state snapshots, step 0 included."""
        points = snapshot_points if snapshot_points is not None else self.cfg.snapshot_points
        return snapshot_schedule(points, self.total_steps(t_end))

    def integrate_trajectory(
        self,
        state: SystemState,
        observer: Optional[Observer] = None,
        t_end: Optional[float] = None,
        sample_mode: Optional[str] = None,
        sample_points: Optional[int] = None,
        snapshot_points: Optional[int] = None,
    ) -> TrajectoryTrace:
        """
        Integrate one trajectory up to ``t_end``, sampling on a fixed schedule.

        The schedule is expressed in global step numbers, so a run resumed from
        an intermediate state samples exactly where a continuous run would.

        Args:
            state: Starting state (step 0 for a fresh trajectory)
            observer: Called at every sample with
                (t, theta, p_s, kinetic energy, photon proxy, snapshot or None)
            t_end: Final time, defaults to the config
            sample_mode: 'linear' or 'log', defaults to the config
            sample_points: Samples in total (linear) or per decade (log), defaults to the config
            snapshot_points: Log-spaced snapshots per decade, defaults to the config

        Returns:
            TrajectoryTrace; on numerical failure the partial trace is flagged
        """
        cfg = self.cfg
        n_total = self.total_steps(t_end)
        schedule = self.sample_steps(t_end, sample_mode, sample_points)
        schedule = schedule[schedule > state.steps]
        snapshots_at = self.snapshot_steps(t_end, snapshot_points)
        snapshots_at = snapshots_at[snapshots_at >= state.steps]

        n_samples = schedule.shape[0]
        times = np.zeros(n_samples)
        theta = np.zeros(n_samples)
        p_s = np.zeros(n_samples)
        kinetic = np.zeros(n_samples)
        trace = TrajectoryTrace(
            index=state.index,
            times=times,
            theta=theta,
            p_s=p_s,
            kinetic=kinetic,
            photons=np.zeros(n_samples),
        )

        if not state.is_finite():
            trace.failed = True
            trace.error = "non-finite initial state"
            self.logger.error(f"Trajectory {state.index}: {trace.error}")

        snap_ptr = 0
        if snapshots_at.shape[0] and snapshots_at[0] == state.steps:
            trace.snapshots.append(state.copy())
            snap_ptr = 1

        sample_ptr = 0
        while not trace.failed and state.steps < n_total:
            try:
                state = self.step(state)
            except NumericalError as e:
                self.logger.error(f"Trajectory {state.index}: {e}")
                trace.failed = True
                trace.error = str(e)
                break

            snapshot: Optional[SystemState] = None
            if snap_ptr < snapshots_at.shape[0] and state.steps == snapshots_at[snap_ptr]:
                snapshot = state.copy()
                trace.snapshots.append(snapshot)
                snap_ptr += 1

            if sample_ptr < n_samples and state.steps == schedule[sample_ptr]:
                th = float(np.mean(np.cos(state.x)))
                ps = float(np.mean(np.sin(state.x) * state.p))
                ke = float(cfg.omega_r * np.dot(state.p, state.p))
                times[sample_ptr] = state.t
                theta[sample_ptr] = th
                p_s[sample_ptr] = ps
                kinetic[sample_ptr] = ke
                if observer is not None:
                    observer(state.t, th, ps, ke, float(photon_proxy(th, cfg)), snapshot)
                sample_ptr += 1

        trace.times = times[:sample_ptr]
        trace.theta = theta[:sample_ptr]
        trace.p_s = p_s[:sample_ptr]
        trace.kinetic = kinetic[:sample_ptr]
        trace.photons = np.asarray(photon_proxy(trace.theta, cfg), dtype=np.float64)
        trace.final_state = state

        if self.debug:
            self.logger.debug(
                f"Trajectory {state.index}: {sample_ptr} samples, "
                f"{len(trace.snapshots)} snapshots, t={state.t}"
            )
        return trace
