"""Stationary and transient diagnostics over trajectory ensembles."""

import logging
import math
from typing import Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy import stats

from .models import AlphaFit, FloatArray, Histogram, JumpStats, MsdCurve

logger = logging.getLogger(__name__)

DEFAULT_BINS = 101
DEFAULT_MSD_WINDOW = (1e2, 1e4)


def _flat(samples: npt.ArrayLike) -> FloatArray:
    return np.asarray(samples, dtype=np.float64).ravel()


def kinetic_temperature(momenta: npt.ArrayLike, omega_r: float) -> float:
    """
    Temperature from equipartition, T = 2 omega_r <p**2>.

    Args:
        momenta: Momentum samples of any shape (atoms, trajectories, times)
        omega_r: Recoil frequency in units of kappa

    Returns:
        Kinetic temperature in units of hbar*kappa/k_B
    """
    p = _flat(momenta)
    if p.shape[0] < 2:
        raise ValueError("kinetic_temperature needs at least 2 momentum samples")
    return float(2.0 * omega_r * np.mean(p * p))


def excess_kurtosis(samples: npt.ArrayLike) -> float:
    """
    Excess kurtosis <(p - <p>)**4> / Var**2 - 3.

    Args:
        samples: At least 4 samples

    Returns:
        0 for a Gaussian, -2 for a symmetric two-point law, -1.2 for a uniform one
    """
    values = _flat(samples)
    if values.shape[0] < 4:
        raise ValueError("excess_kurtosis needs at least 4 samples")
    if np.var(values) == 0.0:
        raise ValueError("excess_kurtosis is undefined for zero variance")
    return float(stats.kurtosis(values, fisher=True, bias=True))


def _histogram(values: FloatArray, bins: int, value_range: Tuple[float, float]) -> Histogram:
    if bins < 2:
        raise ValueError("at least 2 bins are required")
    if values.shape[0] == 0:
        raise ValueError("cannot histogram an empty sample")
    counts, edges = np.histogram(values, bins=bins, range=value_range)
    density = counts / (values.shape[0] * np.diff(edges))
    return Histogram(edges=edges, counts=counts.astype(np.int64), density=density)


def theta_histogram(samples: npt.ArrayLike, bins: int = DEFAULT_BINS) -> Histogram:
    """
    Probability density P(Theta) over [-1, 1].

    An odd number of bins centers one bin on Theta = 0.

    Args:
        samples: Stationary Theta samples
        bins: Number of bins

    Returns:
        Histogram normalized to unit integral
    """
    return _histogram(_flat(samples), bins, (-1.0, 1.0))


def momentum_histogram(momenta: npt.ArrayLike, bins: int = DEFAULT_BINS) -> Histogram:
    """Momentum density over the symmetric data range."""
    p = _flat(momenta)
    bound = float(np.max(np.abs(p))) if p.shape[0] else 1.0
    bound = bound if bound > 0 else 1.0
    return _histogram(p, bins, (-bound, bound))


def position_histogram(positions: npt.ArrayLike, bins: int = 64) -> Histogram:
    """Density of positions folded onto one wavelength [0, 2 pi)."""
    x = np.mod(_flat(positions), 2.0 * math.pi)
    return _histogram(x, bins, (0.0, 2.0 * math.pi))


def thermal_momentum_density(p: npt.ArrayLike, temp: float, omega_r: float) -> FloatArray:
    """Maxwell-Boltzmann density of momenta at temperature ``temp``."""
    variance = temp / (2.0 * omega_r)
    values = np.asarray(p, dtype=np.float64)
    return np.exp(-values * values / (2.0 * variance)) / math.sqrt(2.0 * math.pi * variance)


def susceptibility(samples: npt.ArrayLike) -> float:
    """
    chi = <Theta**2> - <|Theta|>**2.

    Args:
        samples: Stationary Theta samples

    Returns:
        Susceptibility
    """
    theta = _flat(samples)
    if theta.shape[0] == 0:
        raise ValueError("susceptibility of an empty sample")
    return float(np.mean(theta * theta) - np.mean(np.abs(theta)) ** 2)


def msd(
    times: npt.ArrayLike,
    positions: npt.ArrayLike,
    initial: npt.ArrayLike,
) -> MsdCurve:
    """
    Mean squared displacement from unwrapped positions.

    Args:
        times: Sample times, shape (n_times,)
        positions: Unwrapped positions, shape (n_traj, n_times, N)
        initial: Positions at t = 0, shape (n_traj, N)

    Returns:
        MsdCurve restricted to t > 0; errors are standard errors over
        trajectories (over atoms for a single trajectory)
    """
    t = np.asarray(times, dtype=np.float64)
    x = np.asarray(positions, dtype=np.float64)
    x0 = np.asarray(initial, dtype=np.float64)
    if x.ndim == 2:
        x = x[np.newaxis]
        x0 = x0[np.newaxis]
    if x.shape[1] != t.shape[0]:
        raise ValueError("positions and times disagree on the number of samples")

    two_pi = 2.0 * math.pi
    steps = np.diff(np.concatenate([x0[:, np.newaxis, :], x], axis=1), axis=1)
    if x.size and x.min() >= 0.0 and x.max() < two_pi and np.abs(steps).max() > math.pi:
        logger.warning("Positions look wrapped onto [0, 2pi); MSD will be wrong")

    keep = t > 0
    t = t[keep]
    squared = (x[:, keep, :] - x0[:, np.newaxis, :]) ** 2
    per_traj = squared.mean(axis=2)
    curve = per_traj.mean(axis=0)
    n_traj = per_traj.shape[0]
    if n_traj > 1:
        stderr = per_traj.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        n_atoms = squared.shape[2]
        stderr = squared[0].std(axis=1, ddof=1) / math.sqrt(n_atoms) if n_atoms > 1 else np.zeros_like(curve)
    return MsdCurve(times=t, msd=curve, stderr=stderr, per_atom=squared.mean(axis=0))


def fit_alpha(
    curve: MsdCurve, window: Tuple[float, float] = DEFAULT_MSD_WINDOW
) -> AlphaFit:
    """
    Fit MSD ~ t**(2 alpha) by least squares in log-log coordinates.

    Args:
        curve: Mean squared displacement
        window: Inclusive time window (t1, t2)

    Returns:
        AlphaFit with half the log-log slope and its standard error
    """
    t1, t2 = window
    mask = (curve.times >= t1) & (curve.times <= t2)
    t = curve.times[mask]
    y = curve.msd[mask]
    if t.shape[0] < 5:
        raise ValueError(f"need at least 5 MSD points in window {window}, got {t.shape[0]}")
    if np.any(y <= 0):
        raise ValueError("MSD must be positive inside the fit window")
    fit = stats.linregress(np.log(t), np.log(y))
    return AlphaFit(alpha=float(fit.slope) / 2.0, stderr=float(fit.stderr) / 2.0, n_points=int(t.shape[0]))


def grating_jumps(
    times: npt.ArrayLike, theta: npt.ArrayLike, threshold: float = 0.3
) -> JumpStats:
    """
    Count switches of Theta between the even and odd Bragg gratings.

    A jump is registered when Theta reaches the opposite side of
    +-threshold; excursions that stay inside the band are ignored.

    Args:
        times: Sample times
        theta: Order parameter samples
        threshold: Hysteresis half-width

    Returns:
        JumpStats with the mean residence time between jumps
    """
    t = _flat(times)
    th = _flat(theta)
    if t.shape[0] == 0:
        return JumpStats(n_jumps=0, mean_residence=0.0, jump_times=np.zeros(0))

    side = 0
    jump_times = []
    for ti, value in zip(t, th):
        if value >= threshold:
            current = 1
        elif value <= -threshold:
            current = -1
        else:
            continue
        if side and current != side:
            jump_times.append(ti)
        side = current

    span = float(t[-1] - t[0])
    mean_residence = span / (len(jump_times) + 1)
    return JumpStats(
        n_jumps=len(jump_times),
        mean_residence=mean_residence,
        jump_times=np.asarray(jump_times, dtype=np.float64),
    )


def kurtosis_series(
    times: Sequence[float], momenta: Sequence[npt.ArrayLike], omega_r: float
) -> pd.DataFrame:
    """
    Momentum excess kurtosis and kinetic temperature at each snapshot time.

    Args:
        times: Snapshot times
        momenta: One momentum array per time (pooled over trajectories)
        omega_r: Recoil frequency in units of kappa

    Returns:
        DataFrame with columns t, excess_kurtosis, stderr, kinetic_temperature
    """
    rows = []
    for t, p in zip(times, momenta):
        values = _flat(p)
        rows.append(
            {
                "t": float(t),
                "excess_kurtosis": excess_kurtosis(values),
                "stderr": math.sqrt(24.0 / values.shape[0]),
                "kinetic_temperature": kinetic_temperature(values, omega_r),
            }
        )
    return pd.DataFrame(rows, columns=["t", "excess_kurtosis", "stderr", "kinetic_temperature"])
