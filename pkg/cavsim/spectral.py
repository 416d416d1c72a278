"""Coherence functions and intensity spectrum of the cavity output.

The cavity field is proportional to Theta(t), so every estimator here works on
uniformly sampled Theta series of shape (n_traj, n_samples).
"""

import math
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import signal

from .models import CorrelationCurve, FloatArray, Spectrum

WINDOWS = ("hann", "hamming", "blackman", "bartlett", "boxcar")


def _as_traces(traces: npt.ArrayLike) -> FloatArray:
    data = np.asarray(traces, dtype=np.float64)
    if data.ndim == 1:
        data = data[np.newaxis, :]
    if data.ndim != 2 or data.shape[1] == 0:
        raise ValueError("traces must have shape (n_traj, n_samples)")
    return data


def sampling_interval(times: npt.ArrayLike) -> float:
    """
    Check that ``times`` is a uniform grid and return its spacing.

    Args:
        times: Sample times

    Returns:
        Grid spacing
    """
    t = np.asarray(times, dtype=np.float64)
    if t.shape[0] < 2:
        raise ValueError("at least two sample times are required")
    spacing = np.diff(t)
    if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
        raise ValueError("samples are not uniformly spaced; use sample_mode = linear")
    return float(spacing[0])


def _lagged_products(data: FloatArray, max_lag: int) -> FloatArray:
    n = data.shape[1]
    out = np.empty((data.shape[0], max_lag + 1))
    for lag in range(max_lag + 1):
        out[:, lag] = np.mean(data[:, lag:] * data[:, : n - lag], axis=1)
    return out


def _correlation(
    times: npt.ArrayLike,
    signal_traces: FloatArray,
    max_lag: int,
    normalization: float,
    kind: str,
) -> CorrelationCurve:
    spacing = sampling_interval(times)
    n_samples = signal_traces.shape[1]
    if max_lag < 0 or max_lag >= n_samples:
        raise ValueError(f"max_lag must lie in [0, {n_samples - 1}]")
    if normalization == 0.0:
        raise ValueError(f"{kind} normalization vanishes")

    per_traj = _lagged_products(signal_traces, max_lag) / normalization
    values = per_traj.mean(axis=0)
    values[0] = float(np.mean(signal_traces * signal_traces)) / normalization
    n_traj = per_traj.shape[0]
    if n_traj > 1:
        errors = per_traj.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        errors = np.full(max_lag + 1, np.nan)
    return CorrelationCurve(
        lags=spacing * np.arange(max_lag + 1),
        values=values,
        errors=errors,
        normalization=normalization,
        kind=kind,
    )


def g1(times: npt.ArrayLike, traces: npt.ArrayLike, max_lag: int) -> CorrelationCurve:
    """
    First-order coherence <Theta(t+tau) Theta(t)> / <|Theta|>**2.

    Args:
        times: Uniform sample times
        traces: Stationary Theta series, shape (n_traj, n_samples)
        max_lag: Largest lag in samples

    Returns:
        CorrelationCurve on lags 0, dt, ..., max_lag*dt
    """
    data = _as_traces(traces)
    normalization = float(np.mean(np.abs(data))) ** 2
    return _correlation(times, data, max_lag, normalization, "g1")


def g2(times: npt.ArrayLike, traces: npt.ArrayLike, max_lag: int) -> CorrelationCurve:
    """
    Intensity correlation <Theta(t+tau)**2 Theta(t)**2> / <Theta**2>**2.

    Args:
        times: Uniform sample times
        traces: Stationary Theta series, shape (n_traj, n_samples)
        max_lag: Largest lag in samples

    Returns:
        CorrelationCurve whose first value is g2(0)
    """
    data = _as_traces(traces)
    intensity = data * data
    normalization = float(np.mean(intensity)) ** 2
    return _correlation(times, intensity, max_lag, normalization, "g2")


def default_segment(n_samples: int, longest: int = 1024) -> int:
    """Largest power of two up to ``longest`` that fits twice into ``n_samples``."""
    if n_samples < 4:
        raise ValueError(f"a spectrum needs at least 4 samples, got {n_samples}")
    return min(longest, 1 << int(math.log2(n_samples // 2)))


def spectrum(
    times: npt.ArrayLike,
    traces: npt.ArrayLike,
    segment_len: Optional[int] = None,
    window: str = "hann",
    overlap: float = 0.5,
) -> Spectrum:
    """
    Welch estimate of the two-sided spectral density of Theta(t).

    Each segment has its mean removed before the FFT; the power of the
    removed means, averaged over the same overlapping segments, is returned
    separately as ``mean_power`` (the weight of the coherent peak at the
    laser frequency). The density is per unit angular frequency, so its
    integral over omega equals the variance of the mean-removed segments.

    The omega grid is the shifted FFT grid: it starts at -pi/dt and stops
    one bin short of +pi/dt.

    Args:
        times: Uniform sample times
        traces: Theta series, shape (n_traj, n_samples)
        segment_len: Segment length, a power of two; by default the largest
            one up to 1024 that fits twice into the traces
        window: One of hann, hamming, blackman, bartlett, boxcar
        overlap: Fraction of overlap between consecutive segments

    Returns:
        Spectrum on a grid centered at omega = 0
    """
    data = _as_traces(traces)
    spacing = sampling_interval(times)
    if segment_len is None:
        segment_len = default_segment(data.shape[1])
    if window not in WINDOWS:
        raise ValueError(f"unknown window {window!r}; choose from {', '.join(WINDOWS)}")
    if segment_len < 2 or segment_len & (segment_len - 1):
        raise ValueError("segment_len must be a power of two")
    if segment_len > data.shape[1]:
        raise ValueError(f"segment_len {segment_len} exceeds trace length {data.shape[1]}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")

    noverlap = int(segment_len * overlap)
    freqs, pxx = signal.welch(
        data,
        fs=1.0 / spacing,
        window=window,
        nperseg=segment_len,
        noverlap=noverlap,
        detrend="constant",
        return_onesided=False,
        scaling="density",
        axis=-1,
    )
    freqs = np.fft.fftshift(freqs)
    density = np.fft.fftshift(pxx.mean(axis=0)) / (2.0 * math.pi)

    starts = range(0, data.shape[1] - segment_len + 1, segment_len - noverlap)
    means = np.stack([data[:, start : start + segment_len].mean(axis=1) for start in starts], axis=1)
    mean_power = float(np.mean(means**2))

    return Spectrum(
        omega=2.0 * math.pi * freqs,
        density=density,
        window=window,
        segment_len=segment_len,
        mean_power=mean_power,
    )


def sideband_position(spec: Spectrum, min_omega: float) -> Tuple[float, float]:
    """
    Locate the strongest sideband maxima on either side of the carrier.

    Args:
        spec: Spectrum
        min_omega: Ignore |omega| below this value (the central peak)

    Returns:
        (omega of the negative sideband, omega of the positive sideband);
        NaN where no local maximum exists
    """
    result = []
    for sign in (-1.0, 1.0):
        mask = sign * spec.omega >= min_omega
        omega = spec.omega[mask]
        density = spec.density[mask]
        peaks, _ = signal.find_peaks(density)
        if peaks.shape[0] == 0:
            result.append(math.nan)
        else:
            result.append(float(omega[peaks[np.argmax(density[peaks])]]))
    return result[0], result[1]
