"""Utility functions for the cavity self-organization simulator."""

import hashlib
import logging
import math
import os
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

THREADS_ENV = "CAVSIM_THREADS"


def trajectory_seed_sequence(master_seed: int, index: int) -> np.random.SeedSequence:
    """
    Derive the seed sequence of one trajectory from the master seed.

    Args:
        master_seed: 64-bit master seed of the run
        index: Trajectory index

    Returns:
        Seed sequence spawned at ``(index,)`` below the master entropy
    """
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """
    Build the counter-based noise stream of one trajectory.

    The stream depends only on ``(master_seed, index)``, never on which
    worker happens to run the trajectory.

    Args:
        master_seed: 64-bit master seed of the run
        index: Trajectory index

    Returns:
        Philox-backed generator
    """
    return np.random.Generator(np.random.Philox(trajectory_seed_sequence(master_seed, index)))


def trajectory_seed(master_seed: int, index: int) -> int:
    """Condense the stream of one trajectory into a single integer for manifests."""
    state = trajectory_seed_sequence(master_seed, index).generate_state(1, np.uint64)
    return int(state[0])


def sample_schedule(mode: str, points: int, n_steps: int) -> npt.NDArray[np.int64]:
    """
    Compute the step indices at which a trajectory is sampled.

    Linear schedules use a constant stride so that the sampled series sits on
    a uniform grid of ``points`` samples. Log schedules place ``points``
    samples per decade of steps at round(10**(k / points)), plus the final
    step. The log grid below ``n_steps`` does not depend on ``n_steps``, so a
    longer run samples a superset of the steps of a shorter one; steps that
    round onto the same index are merged.

    Args:
        mode: 'linear' or 'log'
        points: Samples in total (linear) or per decade (log)
        n_steps: Total number of integration steps

    Returns:
        Sorted, unique step indices in [1, n_steps]
    """
    if points < 1 or n_steps < 1:
        raise ValueError("points and n_steps must be positive")

    if mode == "linear":
        stride = max(1, n_steps // points)
        count = min(points, n_steps // stride)
        return stride * np.arange(1, count + 1, dtype=np.int64)

    if mode == "log":
        k_max = int(math.floor(points * math.log10(n_steps) + 1e-9))
        raw = np.rint(10.0 ** (np.arange(k_max + 1) / points)).astype(np.int64)
        steps = np.unique(np.append(raw[raw <= n_steps], n_steps))
        logger.debug(f"Log schedule: {steps.shape[0]} steps up to {n_steps}")
        return steps

    raise ValueError(f"Unknown sample mode: {mode}")


def snapshot_schedule(points: int, n_steps: int) -> npt.NDArray[np.int64]:
    """
    Compute the step indices of full-state snapshots.

    Snapshots are log-spaced like a log sample schedule and always include
    the initial state (step 0).

    Args:
        points: Snapshots per decade of steps
        n_steps: Total number of integration steps

    Returns:
        Sorted step indices, empty if ``points`` is zero
    """
    if points <= 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.zeros(1, dtype=np.int64), sample_schedule("log", points, n_steps)])


def parse_float_list(text: str) -> List[float]:
    """
    Parse a comma-separated list of numbers.

    Args:
        text: Text such as "0.1, 0.9,1"

    Returns:
        List of floats
    """
    if not text or not text.strip():
        return []
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ValueError(f"Not a comma-separated list of numbers: {text!r}") from e


def file_sha256(path: Union[str, Path]) -> str:
    """Hex SHA-256 digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def resolve_workers(requested: Optional[int] = None) -> int:
    """
    Decide how many worker processes to use.

    Args:
        requested: Explicit worker count, overrides the environment

    Returns:
        Worker count, at least 1, capped by CAVSIM_THREADS when set
    """
    available = os.cpu_count() or 1
    if requested is not None:
        return max(1, requested)

    cap = os.environ.get(THREADS_ENV, "").strip()
    if cap:
        try:
            return max(1, min(available, int(cap)))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={cap!r}")
    return available
