"""Ensemble orchestration: parallel trajectories, persistence, resume and scans."""

import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from . import __version__
from .checkpoint import load_checkpoint, read_checkpoints, save_checkpoint, write_checkpoints
from .config import parse_config, render_config
from .exporter import CSVExporter, read_table
from .integrator import StochasticIntegrator
from .models import (
    CheckpointError,
    ConfigError,
    EnsembleResult,
    NumericalError,
    RunManifest,
    SimConfig,
    SystemState,
    ThetaSamples,
    TrajectoryTrace,
)
from .observables import theta_histogram
from .oracle import oracle_moments
from .physics import critical_pump, initial_ensemble
from .utils import file_sha256, resolve_workers, trajectory_rng, trajectory_seed

SCAN_PARAMS = ("nbar", "nbar_rel", "n_atoms", "delta_c")
AGGREGATE_COLUMNS = [
    "t",
    "mean_abs_theta",
    "se_abs_theta",
    "mean_theta_sq",
    "mean_photons",
    "kinetic_temperature",
]

_Task = Tuple[SimConfig, int, Optional[SystemState]]


def trace_name(index: int) -> str:
    return f"traj_{index:04d}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _integrate_task(task: _Task) -> TrajectoryTrace:
    cfg, index, start = task
    integrator = StochasticIntegrator(cfg)
    if start is None:
        state = initial_ensemble(cfg, trajectory_rng(cfg.seed, index), index)
    else:
        state = start
    trace = integrator.integrate_trajectory(state)
    if start is not None:
        # the starting snapshot already sits in the stream of the earlier run
        trace.snapshots = [snap for snap in trace.snapshots if snap.steps > start.steps]
    return trace


def with_sample_mode(cfg: SimConfig, mode: str, command: str) -> SimConfig:
    """
    Apply the sampling mode a command needs.

    Args:
        cfg: Simulation config, ``sample_mode`` possibly unset
        mode: Mode required by the command
        command: Command name for the error message

    Returns:
        Config with ``sample_mode`` set to ``mode``

    Raises:
        ConfigError: The config asks for another mode
    """
    if cfg.sample_mode is not None and cfg.sample_mode != mode:
        raise ConfigError(
            f"the {command} command needs sample_mode = {mode}, got {cfg.sample_mode}",
            key="sample_mode",
        )
    return dataclasses.replace(cfg, sample_mode=mode)


def scan_point(cfg: SimConfig, param: str, value: float) -> SimConfig:
    """
    Config of one point of a parameter scan.

    Args:
        cfg: Base config
        param: One of nbar, nbar_rel, n_atoms, delta_c
        value: Parameter value; nbar_rel is relative to the threshold of ``cfg``

    Returns:
        Validated config
    """
    if param == "nbar_rel":
        return dataclasses.replace(cfg, nbar=value * critical_pump(cfg.delta_c))
    if param == "nbar":
        return dataclasses.replace(cfg, nbar=value)
    if param == "n_atoms":
        if value != int(value):
            raise ConfigError(f"must be an integer, got {value}", key="n_atoms")
        return dataclasses.replace(cfg, n_atoms=int(value))
    if param == "delta_c":
        return dataclasses.replace(cfg, delta_c=value)
    raise ConfigError(f"cannot scan {param!r}; choose from {', '.join(SCAN_PARAMS)}", key="param")


def _trace_from_frame(index: int, frame: pd.DataFrame) -> TrajectoryTrace:
    return TrajectoryTrace(
        index=index,
        times=frame["t"].to_numpy(dtype=np.float64),
        theta=frame["theta"].to_numpy(dtype=np.float64),
        p_s=frame["p_s"].to_numpy(dtype=np.float64),
        kinetic=frame["kinetic"].to_numpy(dtype=np.float64),
        photons=frame["photons"].to_numpy(dtype=np.float64),
    )


def _continue_trace(
    before: TrajectoryTrace,
    start: SystemState,
    sample_steps: npt.NDArray[np.int64],
    snapshot_steps: npt.NDArray[np.int64],
    dt: float,
) -> TrajectoryTrace:
    """
    Cut an earlier trace down to the samples a run up to the new end keeps.

    Only rows and snapshots at steps of the new schedules up to the checkpoint
    survive, so the joined trace samples where a continuous run would.

    Raises:
        ConfigError: A step of the new schedule before the checkpoint was never sampled
    """
    steps = np.rint(before.times / dt).astype(np.int64)
    keep = np.isin(steps, sample_steps) & (steps <= start.steps)
    if not np.array_equal(steps[keep], sample_steps[sample_steps <= start.steps]):
        raise ConfigError(
            f"trajectory {before.index} was sampled on another grid; runs can only be "
            f"extended with sample_mode = log and the same sample_points",
            key="t_end",
        )
    wanted = set(snapshot_steps.tolist())
    snapshots = [
        snap for snap in before.snapshots if snap.steps <= start.steps and snap.steps in wanted
    ]
    expected = snapshot_steps[snapshot_steps <= start.steps]
    if [snap.steps for snap in snapshots] != expected.tolist():
        raise ConfigError(
            f"trajectory {before.index} holds snapshots of another schedule", key="snapshot_points"
        )
    return TrajectoryTrace(
        index=before.index,
        times=before.times[keep],
        theta=before.theta[keep],
        p_s=before.p_s[keep],
        kinetic=before.kinetic[keep],
        photons=before.photons[keep],
        snapshots=snapshots,
    )


def _join_traces(before: TrajectoryTrace, after: TrajectoryTrace) -> TrajectoryTrace:
    return TrajectoryTrace(
        index=after.index,
        times=np.concatenate([before.times, after.times]),
        theta=np.concatenate([before.theta, after.theta]),
        p_s=np.concatenate([before.p_s, after.p_s]),
        kinetic=np.concatenate([before.kinetic, after.kinetic]),
        photons=np.concatenate([before.photons, after.photons]),
        snapshots=before.snapshots + after.snapshots,
        final_state=after.final_state,
        failed=after.failed,
        error=after.error,
    )


def aggregate(result: EnsembleResult) -> pd.DataFrame:
    """
    Ensemble averages over trajectories at each sample time.

    Failed trajectories are left out. Trajectories are summed in index order,
    so the result does not depend on which worker finished first.

    Args:
        result: Ensemble run

    Returns:
        DataFrame with columns t, mean_abs_theta, se_abs_theta,
        mean_theta_sq, mean_photons, kinetic_temperature
    """
    good = sorted(result.good_traces, key=lambda trace: trace.index)
    if not good:
        raise NumericalError("no trajectory finished without numerical failure")
    times = good[0].times
    for trace in good[1:]:
        if not np.array_equal(trace.times, times):
            raise ValueError(f"trajectory {trace.index} was sampled on another time grid")

    theta = np.vstack([trace.theta for trace in good])
    abs_theta = np.abs(theta)
    n_traj = theta.shape[0]
    if n_traj > 1:
        se_abs_theta = abs_theta.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        se_abs_theta = np.full(times.shape[0], np.nan)
    kinetic = np.vstack([trace.kinetic for trace in good])
    photons = np.vstack([trace.photons for trace in good])

    return pd.DataFrame(
        {
            "t": times,
            "mean_abs_theta": abs_theta.mean(axis=0),
            "se_abs_theta": se_abs_theta,
            "mean_theta_sq": (theta * theta).mean(axis=0),
            "mean_photons": photons.mean(axis=0),
            "kinetic_temperature": 2.0 * kinetic.mean(axis=0) / result.config.n_atoms,
        },
        columns=AGGREGATE_COLUMNS,
    )


def stationary_theta(result: EnsembleResult, t_burn: Optional[float] = None) -> ThetaSamples:
    """
    Pool the Theta samples taken after the burn-in time.

    Args:
        result: Ensemble run
        t_burn: Start of the stationary window, defaults to the config

    Returns:
        ThetaSamples from all good trajectories, in trajectory order
    """
    cfg = result.config
    burn = cfg.burn_time if t_burn is None else t_burn
    good = sorted(result.good_traces, key=lambda trace: trace.index)
    pieces = [trace.theta[trace.times >= burn] for trace in good]
    theta = np.concatenate(pieces) if pieces else np.zeros(0)
    return ThetaSamples(
        theta=theta, n_atoms=cfg.n_atoms, nbar=cfg.nbar, delta_c=cfg.delta_c, source="sde"
    )


def stationary_temperature(result: EnsembleResult, t_burn: Optional[float] = None) -> float:
    """Kinetic temperature 2 <kinetic energy> / N after the burn-in time."""
    cfg = result.config
    burn = cfg.burn_time if t_burn is None else t_burn
    pieces = [trace.kinetic[trace.times >= burn] for trace in result.good_traces]
    kinetic = np.concatenate(pieces) if pieces else np.zeros(0)
    if kinetic.shape[0] == 0:
        raise ValueError(f"no samples after t_burn = {burn}")
    return float(2.0 * np.mean(kinetic) / cfg.n_atoms)


def load_run(directory: Union[str, Path]) -> EnsembleResult:
    """
    Rebuild an ensemble run from its output directory.

    Args:
        directory: Directory written by ``run``

    Returns:
        EnsembleResult with traces, snapshot streams and final states
    """
    out = Path(directory)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"{out} holds no manifest.json", key="in")
    manifest = RunManifest.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))
    cfg = parse_config(manifest.config_text)

    traces = []
    for index in range(cfg.n_traj):
        name = trace_name(index)
        trace = _trace_from_frame(index, read_table(out / "traces" / f"{name}.csv"))
        snapshots = out / "snapshots" / f"{name}.snap"
        if snapshots.exists():
            trace.snapshots = read_checkpoints(snapshots)
        checkpoint = out / "checkpoints" / f"{name}.ckpt"
        if checkpoint.exists():
            trace.final_state = load_checkpoint(checkpoint)
        trace.failed = index in manifest.failed
        traces.append(trace)
    return EnsembleResult(config=cfg, traces=traces, manifest=manifest)


class EnsembleRunner:
    """Runs trajectory ensembles and writes their output files."""

    def __init__(self, workers: Optional[int] = None, debug: bool = False) -> None:
        """
        Initialize the ensemble runner.

        Args:
            workers: Worker processes, defaults to CAVSIM_THREADS or the CPU count
            debug: Enable debug logging
        """
        self.workers = resolve_workers(workers)
        self.debug = debug
        self.exporter = CSVExporter()
        self.logger = logging.getLogger(__name__)

        if debug:
            logging.basicConfig(level=logging.DEBUG)

    def run_trajectory(
        self, cfg: SimConfig, index: int, start: Optional[SystemState] = None
    ) -> TrajectoryTrace:
        """
        Integrate one trajectory in this process.

        Args:
            cfg: Simulation config
            index: Trajectory index, selects the noise stream
            start: State to continue from, a fresh quench when omitted

        Returns:
            TrajectoryTrace
        """
        return _integrate_task((cfg, index, start))

    def _map(
        self, tasks: List[_Task], on_done: Callable[[TrajectoryTrace], TrajectoryTrace]
    ) -> List[TrajectoryTrace]:
        n_workers = min(self.workers, len(tasks))
        traces: List[TrajectoryTrace] = []
        if n_workers <= 1:
            for task in tasks:
                traces.append(on_done(_integrate_task(task)))
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                futures = [pool.submit(_integrate_task, task) for task in tasks]
                for future in as_completed(futures):
                    traces.append(on_done(future.result()))
        return sorted(traces, key=lambda trace: trace.index)

    def _load_previous(
        self, out: Path, cfg: SimConfig
    ) -> Tuple[List[Optional[SystemState]], Dict[int, TrajectoryTrace]]:
        integrator = StochasticIntegrator(cfg)
        sample_steps = integrator.sample_steps()
        snapshot_steps = integrator.snapshot_steps()
        starts: List[Optional[SystemState]] = [None] * cfg.n_traj
        previous: Dict[int, TrajectoryTrace] = {}
        for index in range(cfg.n_traj):
            name = trace_name(index)
            checkpoint = out / "checkpoints" / f"{name}.ckpt"
            if not checkpoint.exists():
                self.logger.info(f"No checkpoint for trajectory {index}; starting it afresh")
                continue
            state = load_checkpoint(checkpoint)
            if state.index != index:
                raise CheckpointError(f"{checkpoint} holds trajectory {state.index}, not {index}")
            if state.steps > integrator.total_steps():
                raise ConfigError(
                    f"trajectory {index} is already at t={state.t}, past t_end = {cfg.t_end}",
                    key="t_end",
                )
            starts[index] = state
            trace = _trace_from_frame(index, read_table(out / "traces" / f"{name}.csv"))
            snapshots = out / "snapshots" / f"{name}.snap"
            if snapshots.exists():
                trace.snapshots = read_checkpoints(snapshots)
            previous[index] = _continue_trace(
                trace, state, sample_steps, snapshot_steps, integrator.settings.dt
            )
        return starts, previous

    def run_ensemble(
        self,
        cfg: SimConfig,
        out_dir: Optional[Union[str, Path]] = None,
        resume: bool = False,
    ) -> EnsembleResult:
        """
        Integrate ``cfg.n_traj`` trajectories and optionally persist them.

        Trajectory ``i`` always draws from the stream split off the master
        seed at ``i``, so results do not depend on the worker count. With an
        output directory, each trajectory's trace, snapshots and checkpoint
        are written as soon as it finishes; an interrupted run can be resumed
        from whatever checkpoints made it to disk.

        Args:
            cfg: Simulation config
            out_dir: Output directory; nothing is written when omitted
            resume: Continue every trajectory from its checkpoint in ``out_dir``

        Returns:
            EnsembleResult; failed trajectories are flagged, not dropped
        """
        StochasticIntegrator(cfg).check_stability()
        started = _now()
        out = Path(out_dir) if out_dir is not None else None

        starts: List[Optional[SystemState]] = [None] * cfg.n_traj
        previous: Dict[int, TrajectoryTrace] = {}
        if resume:
            if out is None:
                raise ConfigError("resuming needs the output directory of the earlier run", key="out")
            starts, previous = self._load_previous(out, cfg)

        written: List[Path] = []
        if out is not None:
            for sub in ("traces", "checkpoints", "snapshots"):
                (out / sub).mkdir(parents=True, exist_ok=True)
            (out / "config.cfg").write_text(render_config(cfg), encoding="utf-8")
            written.append(out / "config.cfg")

        def finish(trace: TrajectoryTrace) -> TrajectoryTrace:
            if trace.index in previous:
                trace = _join_traces(previous[trace.index], trace)
            if trace.failed:
                self.logger.warning(f"Trajectory {trace.index} failed and is excluded from aggregates")
            if out is not None:
                written.extend(self._write_trajectory(trace, out))
            return trace

        if self.debug:
            self.logger.debug(
                f"Running {cfg.n_traj} trajectories of {cfg.n_steps} steps on {self.workers} workers"
            )
        tasks: List[_Task] = [(cfg, index, starts[index]) for index in range(cfg.n_traj)]
        result = EnsembleResult(config=cfg, traces=self._map(tasks, finish))

        if out is not None:
            result.manifest = self._persist(result, out, started, written)
        return result

    def _write_trajectory(self, trace: TrajectoryTrace, out: Path) -> List[Path]:
        # the checkpoint goes last: a checkpoint on disk implies its trace is complete
        name = trace_name(trace.index)
        written = [out / "traces" / f"{name}.csv"]
        self.exporter.export_trace(trace, written[-1])
        if trace.snapshots:
            written.append(out / "snapshots" / f"{name}.snap")
            write_checkpoints(trace.snapshots, written[-1])
        if trace.final_state is not None and not trace.failed:
            written.append(out / "checkpoints" / f"{name}.ckpt")
            save_checkpoint(trace.final_state, written[-1])
        if self.debug:
            self.logger.debug(f"Saved trajectory {trace.index} with {trace.n_samples} samples")
        return written

    def _persist(
        self, result: EnsembleResult, out: Path, started: str, written: List[Path]
    ) -> RunManifest:
        cfg = result.config
        files = list(written)
        try:
            if result.good_traces:
                path = out / "aggregate.csv"
                self.exporter.write_table(aggregate(result), path)
                files.append(path)
        finally:
            manifest = RunManifest(
                config_text=render_config(cfg),
                version=__version__,
                master_seed=cfg.seed,
                trajectory_seeds=[trajectory_seed(cfg.seed, index) for index in range(cfg.n_traj)],
                started=started,
                finished=_now(),
                files={path.relative_to(out).as_posix(): file_sha256(path) for path in files},
                failed=result.failed_indices,
            )
            (out / "manifest.json").write_text(
                json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            self.logger.info(f"Wrote {len(files) + 1} files to {out}")
        return manifest

    def scan(
        self,
        cfg: SimConfig,
        param: str,
        values: Sequence[float],
        out_dir: Optional[Union[str, Path]] = None,
    ) -> pd.DataFrame:
        """
        Stationary observables over a grid of one parameter.

        Args:
            cfg: Base config
            param: One of nbar, nbar_rel, n_atoms, delta_c
            values: Grid of parameter values
            out_dir: Where to write scan.csv and one Theta histogram per point

        Returns:
            One row per grid point with nbar, g2_0, chi, <|Theta|> and the
            kinetic temperature, each moment with its jackknife error
        """
        if param not in SCAN_PARAMS:
            raise ConfigError(f"cannot scan {param!r}; choose from {', '.join(SCAN_PARAMS)}", key="param")
        if not values:
            raise ConfigError("no scan values given", key="values")
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)

        rows = []
        for point_index, value in enumerate(values):
            point = scan_point(cfg, param, value)
            result = self.run_ensemble(point)
            samples = stationary_theta(result)
            if samples.theta.shape[0] == 0:
                raise NumericalError(f"{param} = {value}: no stationary samples")
            moments = oracle_moments(samples.theta)
            rows.append(
                {
                    "n_atoms": point.n_atoms,
                    "delta_c": point.delta_c,
                    "nbar": point.nbar,
                    "nbar_rel": point.nbar / critical_pump(point.delta_c),
                    "g2_0": moments.g2_0.value,
                    "g2_0_err": moments.g2_0.error,
                    "chi": moments.chi.value,
                    "chi_err": moments.chi.error,
                    "abs_theta": moments.abs_theta.value,
                    "abs_theta_err": moments.abs_theta.error,
                    "theta_sq": moments.theta_sq.value,
                    "theta_sq_err": moments.theta_sq.error,
                    "kinetic_temperature": stationary_temperature(result),
                    "n_failed": len(result.failed_indices),
                }
            )
            if self.debug:
                self.logger.debug(f"Scan {param} = {value}: <|Theta|> = {moments.abs_theta.value:.4g}")
            if out is not None:
                hist = theta_histogram(samples.theta, bins=cfg.hist_bins)
                self.exporter.write_table(
                    self.exporter.histogram_frame(hist), out / f"theta_hist_{point_index:03d}.csv"
                )

        frame = pd.DataFrame(rows)
        if out is not None:
            self.exporter.write_table(frame, out / "scan.csv")
        return frame


def run_ensemble(
    cfg: SimConfig,
    out_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
    resume: bool = False,
) -> EnsembleResult:
    """Run an ensemble with a default EnsembleRunner."""
    return EnsembleRunner(workers=workers).run_ensemble(cfg, out_dir=out_dir, resume=resume)
