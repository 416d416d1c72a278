"""Forces, energies and rates of atoms self-organizing in a pumped cavity.

All quantities are dimensionless: x = k*x_phys, p = p_phys/(hbar*k),
t = kappa*t_phys, energies in hbar*kappa. The Hamiltonian is taken at leading
order in the dynamical Stark shift,

    H = omega_r * sum_j p_j**2 + delta_c * nbar * N * Theta**2,

with Theta = mean_j cos(x_j).
"""

import math
from typing import Union

import numpy as np

from .models import ConfigError, DerivedRates, FloatArray, SimConfig, SystemState


def critical_pump(delta_c: float) -> float:
    """
    Self-organization threshold of the pump strength.

    Args:
        delta_c: Cavity detuning in units of kappa

    Returns:
        nbar_c = (1 + 1/delta_c**2) / 4
    """
    return (1.0 + 1.0 / delta_c**2) / 4.0


def compute_rates(nbar: float, delta_c: float, omega_r: float, n_atoms: int) -> DerivedRates:
    """
    Closed-form rates for the given parameters.

    Args:
        nbar: Pump strength (maximum intracavity photons per atom)
        delta_c: Cavity detuning in units of kappa, must be negative
        omega_r: Recoil frequency in units of kappa, must be positive
        n_atoms: Number of atoms

    Returns:
        DerivedRates
    """
    if not delta_c < 0:
        raise ConfigError("only delta_c < 0 is supported", key="delta_c")
    if not omega_r > 0:
        raise ConfigError("must be > 0", key="omega_r")
    if n_atoms < 1:
        raise ConfigError("must be at least 1", key="n_atoms")

    lorentz = delta_c**2 + 1.0
    gamma_over_kappa = 8.0 * omega_r * delta_c / lorentz
    beta = -4.0 * delta_c / lorentz
    temp = 1.0 / beta

    return DerivedRates(
        gamma_over_kappa=gamma_over_kappa,
        beta_hbar_kappa=beta,
        temp=temp,
        nbar_c=critical_pump(delta_c),
        friction=nbar * gamma_over_kappa,
        # -nbar*Gamma*m/(beta*N) in units of (hbar k)^2 kappa; omega_r and delta_c cancel.
        diffusion=nbar / n_atoms,
        momentum_var_eq=temp / (2.0 * omega_r),
    )


def derive_rates(cfg: SimConfig) -> DerivedRates:
    """Closed-form rates of a simulation config."""
    return compute_rates(cfg.nbar, cfg.delta_c, cfg.omega_r, cfg.n_atoms)


def theta_of(x: FloatArray) -> float:
    """Order parameter of a position array."""
    return float(np.mean(np.cos(x)))


def order_parameter(state: SystemState) -> float:
    """Theta = mean_j cos(x_j), in [-1, 1]."""
    return theta_of(state.x)


def collective_sine_momentum(state: SystemState) -> float:
    """P_s = mean_j sin(x_j) * p_j, the momentum coupled to the cavity losses."""
    return float(np.mean(np.sin(state.x) * state.p))


def kinetic_energy(state: SystemState, cfg: SimConfig) -> float:
    """Kinetic energy omega_r * sum_j p_j**2."""
    return float(cfg.omega_r * np.dot(state.p, state.p))


def potential_energy(theta: float, cfg: SimConfig, n_atoms: int) -> float:
    """Cavity-mediated potential delta_c * nbar * N * Theta**2."""
    return cfg.delta_c * cfg.nbar * n_atoms * theta**2


def energy(state: SystemState, cfg: SimConfig) -> float:
    """
    Total energy in units of hbar*kappa.

    Args:
        state: Phase-space point
        cfg: Simulation config

    Returns:
        omega_r * sum p**2 + delta_c * nbar * N * Theta**2
    """
    return kinetic_energy(state, cfg) + potential_energy(order_parameter(state), cfg, state.n_atoms)


def force_array(x: FloatArray, nbar: float, delta_c: float) -> FloatArray:
    """Momentum drift 2 * delta_c * nbar * Theta * sin(x_i) for a position array."""
    theta = np.mean(np.cos(x))
    return (2.0 * delta_c * nbar * theta) * np.sin(x)


def forces(state: SystemState, cfg: SimConfig) -> FloatArray:
    """
    Conservative forces -dH/dx_i.

    Args:
        state: Phase-space point
        cfg: Simulation config

    Returns:
        Array of N momentum drifts per unit time
    """
    return force_array(state.x, cfg.nbar, cfg.delta_c)


def photon_proxy(
    theta: Union[float, FloatArray], cfg: SimConfig
) -> Union[float, FloatArray]:
    """
    Intracavity photon number N * nbar * Theta**2 (proportionality constant 1).

    Args:
        theta: Order parameter, scalar or array
        cfg: Simulation config

    Returns:
        Photon proxy with the shape of ``theta``
    """
    return cfg.n_atoms * cfg.nbar * np.square(theta)


def well_frequency(cfg: SimConfig) -> float:
    """Oscillation frequency at the bottom of a fully formed grating (|Theta| = 1)."""
    return math.sqrt(4.0 * cfg.omega_r * cfg.nbar * abs(cfg.delta_c))


def initial_ensemble(cfg: SimConfig, rng: np.random.Generator, index: int = 0) -> SystemState:
    """
    Spatially uniform atoms with Maxwell-Boltzmann momenta at ``temp_init``.

    Args:
        cfg: Simulation config
        rng: Noise stream of the trajectory, consumed here and then kept
        index: Trajectory index stored on the state

    Returns:
        SystemState at t = 0
    """
    x = rng.uniform(0.0, 2.0 * math.pi, cfg.n_atoms)
    p = rng.normal(0.0, math.sqrt(cfg.temp_init / (2.0 * cfg.omega_r)), cfg.n_atoms)
    return SystemState(x=x, p=p, rng=rng, t=0.0, steps=0, index=index)
