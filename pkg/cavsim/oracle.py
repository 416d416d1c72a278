"""Metropolis sampler of the thermal distribution exp(-beta H).

Momenta and positions separate in H, so momenta are drawn exactly from their
Gaussian and only positions are sampled by Markov chain Monte Carlo, with
single-atom moves and a global shift x -> x + pi that maps Theta -> -Theta.
"""

import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import stats

from .models import (
    CompareReport,
    ConfigError,
    Estimate,
    EquilibriumSamples,
    FloatArray,
    McmcConfig,
    OracleMoments,
    ThetaSamples,
)
from .physics import compute_rates
from .utils import trajectory_rng

TWO_PI = 2.0 * math.pi
TUNE_INTERVAL = 50
TARGET_ACCEPTANCE = (0.3, 0.5)
JACKKNIFE_BLOCKS = 20
MIN_SAMPLES = 100

logger = logging.getLogger(__name__)


def metropolis_accept_prob(delta_v: float, beta: float) -> float:
    """Metropolis acceptance probability min(1, exp(-beta * delta_v))."""
    exponent = -beta * delta_v
    if exponent >= 0.0:
        return 1.0
    return math.exp(exponent)


class EquilibriumSampler:
    """Markov chain over atomic positions at inverse temperature beta."""

    def __init__(self, cfg: McmcConfig, debug: bool = False) -> None:
        """
        Initialize the sampler.

        Args:
            cfg: Sampler settings
            debug: Enable debug logging
        """
        self.cfg = cfg
        self.rates = compute_rates(cfg.nbar, cfg.delta_c, cfg.omega_r, cfg.n_atoms)
        self.debug = debug
        self.logger = logging.getLogger(__name__)

        if debug:
            logging.basicConfig(level=logging.DEBUG)

    @property
    def coupling(self) -> float:
        """Prefactor of Theta**2 in the potential, delta_c * nbar * N."""
        return self.cfg.delta_c * self.cfg.nbar * self.cfg.n_atoms

    def sample(self) -> EquilibriumSamples:
        """
        Run the chain and return thinned post-burn-in samples.

        Returns:
            EquilibriumSamples with positions wrapped onto [0, 2 pi)
        """
        cfg = self.cfg
        n = cfg.n_atoms
        beta = self.rates.beta_hbar_kappa
        coupling = self.coupling
        rng = trajectory_rng(cfg.seed, 0)

        x = rng.uniform(0.0, TWO_PI, n).tolist()
        cos_x = [math.cos(value) for value in x]
        width = cfg.proposal_width

        kept_positions = []
        kept_theta = []
        accepted_total = 0
        proposed_total = 0
        accepted_block = 0

        for sweep in range(cfg.n_sweeps):
            offsets = rng.uniform(-width, width, n).tolist()
            uniforms = rng.random(n).tolist()
            csum = math.fsum(cos_x)
            theta_sq = (csum / n) ** 2
            accepted_sweep = 0
            for i in range(n):
                candidate = x[i] + offsets[i]
                c_new = math.cos(candidate)
                csum_new = csum - cos_x[i] + c_new
                theta_sq_new = (csum_new / n) ** 2
                delta_v = coupling * (theta_sq_new - theta_sq)
                if delta_v <= 0.0 or uniforms[i] < math.exp(-beta * delta_v):
                    x[i] = candidate % TWO_PI
                    cos_x[i] = c_new
                    csum = csum_new
                    theta_sq = theta_sq_new
                    accepted_sweep += 1

            if cfg.flip_rate > 0.0 and rng.random() < cfg.flip_rate:
                # V depends on Theta**2 only, so the shift by pi is always accepted.
                x = [(value + math.pi) % TWO_PI for value in x]
                cos_x = [-value for value in cos_x]

            if sweep < cfg.burn_in:
                accepted_block += accepted_sweep
                if (sweep + 1) % TUNE_INTERVAL == 0:
                    width = self._tune(width, accepted_block / (TUNE_INTERVAL * n))
                    accepted_block = 0
            else:
                accepted_total += accepted_sweep
                proposed_total += n

            if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0:
                kept_positions.append(list(x))
                kept_theta.append(math.fsum(cos_x) / n)

        acceptance = accepted_total / proposed_total

        positions = np.asarray(kept_positions, dtype=np.float64).reshape(-1, n)
        momenta = rng.normal(0.0, math.sqrt(self.rates.momentum_var_eq), positions.shape)
        if self.debug:
            self.logger.debug(
                f"Metropolis: {positions.shape[0]} samples, acceptance {acceptance:.3f}, "
                f"width {width:.3f}"
            )
        return EquilibriumSamples(
            positions=positions,
            theta=np.asarray(kept_theta, dtype=np.float64),
            momenta=momenta,
            acceptance_rate=acceptance,
            proposal_width=width,
            n_atoms=n,
            nbar=cfg.nbar,
            delta_c=cfg.delta_c,
        )

    @staticmethod
    def _tune(width: float, rate: float) -> float:
        low, high = TARGET_ACCEPTANCE
        if rate < low:
            return width * 0.8
        if rate > high:
            return min(math.pi, width * 1.25)
        return width


def sample_equilibrium(cfg: McmcConfig, debug: bool = False) -> EquilibriumSamples:
    """Sample the thermal distribution for ``cfg``."""
    return EquilibriumSampler(cfg, debug=debug).sample()


def jackknife(
    values: npt.ArrayLike,
    statistic: Callable[[FloatArray], float],
    n_blocks: int = JACKKNIFE_BLOCKS,
) -> Estimate:
    """
    Blocked jackknife estimate of a statistic of a correlated series.

    Args:
        values: Samples in time order
        statistic: Function of a sample array
        n_blocks: Number of contiguous blocks

    Returns:
        Estimate with the full-sample value and the jackknife error
    """
    data = np.asarray(values, dtype=np.float64).ravel()
    full = statistic(data)
    blocks = min(n_blocks, data.shape[0])
    if blocks < 2:
        return Estimate(value=full, error=math.nan)
    bounds = np.linspace(0, data.shape[0], blocks + 1).astype(int)
    leave_one_out = np.array(
        [
            statistic(np.concatenate([data[: bounds[b]], data[bounds[b + 1] :]]))
            for b in range(blocks)
        ]
    )
    spread = np.sum((leave_one_out - leave_one_out.mean()) ** 2)
    return Estimate(value=full, error=math.sqrt((blocks - 1) / blocks * spread))


def _g2_0(theta: FloatArray) -> float:
    second = np.mean(theta**2)
    return float(np.mean(theta**4) / second**2)


def _chi(theta: FloatArray) -> float:
    return float(np.mean(theta**2) - np.mean(np.abs(theta)) ** 2)


def oracle_moments(samples: npt.ArrayLike) -> OracleMoments:
    """
    Order-parameter moments with jackknife errors.

    Args:
        samples: Theta samples in sampling order

    Returns:
        OracleMoments (<Theta**2>, <|Theta|>, <Theta**4>, g2(0), chi)
    """
    theta = np.asarray(samples, dtype=np.float64).ravel()
    if theta.shape[0] == 0:
        raise ValueError("oracle_moments of an empty sample")
    if theta.shape[0] < MIN_SAMPLES:
        logger.warning(
            f"Only {theta.shape[0]} samples; moments need at least {MIN_SAMPLES}"
        )
    return OracleMoments(
        theta_sq=jackknife(theta, lambda a: float(np.mean(a**2))),
        abs_theta=jackknife(theta, lambda a: float(np.mean(np.abs(a)))),
        theta_4=jackknife(theta, lambda a: float(np.mean(a**4))),
        g2_0=jackknife(theta, _g2_0),
        chi=jackknife(theta, _chi),
        n_samples=int(theta.shape[0]),
    )


def _z_score(a: Estimate, b: Estimate) -> float:
    scale = math.sqrt(a.error**2 + b.error**2)
    if scale == 0.0 or math.isnan(scale):
        return 0.0 if a.value == b.value else math.inf
    return (a.value - b.value) / scale


def compare(
    first: ThetaSamples,
    second: ThetaSamples,
    z_bound: float = 3.0,
    distance_bound: float = 0.1,
) -> CompareReport:
    """
    Compare two stationary Theta ensembles.

    Args:
        first: Samples, e.g. from the stochastic dynamics
        second: Samples, e.g. from the Metropolis sampler
        z_bound: Largest accepted |z| of <Theta**2>, <|Theta|> and g2(0)
        distance_bound: Largest accepted Kolmogorov-Smirnov distance

    Returns:
        CompareReport; ``passed`` is the verdict
    """
    if first.n_atoms != second.n_atoms or not (
        math.isclose(first.nbar, second.nbar, rel_tol=1e-9, abs_tol=1e-12)
        and math.isclose(first.delta_c, second.delta_c, rel_tol=1e-9)
    ):
        raise ConfigError(
            "refusing to compare ensembles with different (n_atoms, nbar, delta_c): "
            f"({first.n_atoms}, {first.nbar}, {first.delta_c}) vs "
            f"({second.n_atoms}, {second.nbar}, {second.delta_c})"
        )

    m1 = oracle_moments(first.theta)
    m2 = oracle_moments(second.theta)
    z_scores = {
        "theta_sq": _z_score(m1.theta_sq, m2.theta_sq),
        "abs_theta": _z_score(m1.abs_theta, m2.abs_theta),
        "g2_0": _z_score(m1.g2_0, m2.g2_0),
    }
    distance = float(stats.ks_2samp(first.theta, second.theta).statistic)
    return CompareReport(
        z_scores=z_scores,
        distance=distance,
        z_bound=z_bound,
        distance_bound=distance_bound,
        first=m1,
        second=m2,
    )


def two_atom_weights(
    nbar: float, delta_c: float, n_grid: int = 400
) -> Tuple[FloatArray, FloatArray]:
    """
    Boltzmann weights of two atoms on a midpoint grid of [0, 2 pi)**2.

    Returns:
        (Theta on the grid, normalized weights), both of shape (n_grid, n_grid)
    """
    beta = compute_rates(nbar, delta_c, 0.5, 2).beta_hbar_kappa
    grid = TWO_PI * (np.arange(n_grid) + 0.5) / n_grid
    c = np.cos(grid)
    theta = 0.5 * (c[:, np.newaxis] + c[np.newaxis, :])
    log_w = -beta * delta_c * nbar * 2.0 * theta**2
    weights = np.exp(log_w - log_w.max())
    return theta, weights / weights.sum()


def exact_two_atom_moments(
    nbar: float, delta_c: float, n_grid: int = 400
) -> Dict[str, float]:
    """
    Thermal moments of Theta for N = 2 by grid quadrature.

    Args:
        nbar: Pump strength
        delta_c: Cavity detuning
        n_grid: Grid points per atom

    Returns:
        Dict with theta_sq, abs_theta and theta_4
    """
    theta, weights = two_atom_weights(nbar, delta_c, n_grid)
    return {
        "theta_sq": float(np.sum(weights * theta**2)),
        "abs_theta": float(np.sum(weights * np.abs(theta))),
        "theta_4": float(np.sum(weights * theta**4)),
    }


def discrete_kernel(
    nbar: float,
    delta_c: float,
    n_grid: int = 12,
    max_shift: int = 2,
    flip_rate: float = 0.05,
    beta: Optional[float] = None,
) -> Tuple[FloatArray, FloatArray]:
    """
    Transition matrix of the Metropolis kernel for N = 2 on a lattice.

    Each move either shifts both atoms by half a period (probability
    ``flip_rate``) or picks one atom and displaces it by a uniformly chosen
    nonzero lattice offset in [-max_shift, max_shift].

    Args:
        nbar: Pump strength
        delta_c: Cavity detuning
        n_grid: Lattice points per atom, must be even
        max_shift: Largest single-atom offset in lattice units
        flip_rate: Probability of the global half-period shift
        beta: Inverse temperature, derived from delta_c when omitted

    Returns:
        (row-stochastic matrix of shape (n_grid**2, n_grid**2),
         normalized Boltzmann weights of the lattice states)
    """
    if n_grid % 2:
        raise ValueError("n_grid must be even so that a half-period shift exists")
    if beta is None:
        beta = compute_rates(nbar, delta_c, 0.5, 2).beta_hbar_kappa
    coupling = delta_c * nbar * 2.0
    c = np.cos(TWO_PI * np.arange(n_grid) / n_grid)

    def potential(i: int, j: int) -> float:
        return coupling * (0.5 * (c[i] + c[j])) ** 2

    n_states = n_grid * n_grid
    matrix = np.zeros((n_states, n_states))
    shifts = [s for s in range(-max_shift, max_shift + 1) if s != 0]
    move_prob = (1.0 - flip_rate) / (2.0 * len(shifts))
    half = n_grid // 2

    for i in range(n_grid):
        for j in range(n_grid):
            k = i * n_grid + j
            v = potential(i, j)
            for shift in shifts:
                for a, b in (((i + shift) % n_grid, j), (i, (j + shift) % n_grid)):
                    prob = move_prob * metropolis_accept_prob(potential(a, b) - v, beta)
                    matrix[k, a * n_grid + b] += prob
            flipped = ((i + half) % n_grid) * n_grid + (j + half) % n_grid
            matrix[k, flipped] += flip_rate * metropolis_accept_prob(
                potential((i + half) % n_grid, (j + half) % n_grid) - v, beta
            )
            matrix[k, k] += 1.0 - matrix[k].sum()

    energies = np.array([potential(i, j) for i in range(n_grid) for j in range(n_grid)])
    weights = np.exp(-beta * (energies - energies.min()))
    return matrix, weights / weights.sum()
