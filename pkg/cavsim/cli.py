"""Command-line interface for the cavity self-organization simulator."""

import dataclasses
import logging
import math
import sys
import traceback
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd

from . import __version__
from .config import load_config
from .ensemble import (
    EnsembleRunner,
    load_run,
    stationary_temperature,
    stationary_theta,
    with_sample_mode,
)
from .exporter import CSVExporter
from .models import (
    CheckpointError,
    ConfigError,
    EnsembleResult,
    McmcConfig,
    NumericalError,
    SimConfig,
)
from .observables import (
    DEFAULT_MSD_WINDOW,
    fit_alpha,
    grating_jumps,
    kinetic_temperature,
    kurtosis_series,
    momentum_histogram,
    msd,
    position_histogram,
    theta_histogram,
    thermal_momentum_density,
)
from .oracle import compare, sample_equilibrium
from .spectral import WINDOWS, g1, g2, sampling_interval, spectrum
from .utils import parse_float_list

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_ORACLE_FAIL = 3

config_option = click.option(
    "--config",
    "config_file",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Config file (key = value lines)",
)
out_option = click.option(
    "--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory"
)
workers_option = click.option(
    "--workers",
    type=click.IntRange(min=1),
    default=None,
    help="Worker processes (default: CAVSIM_THREADS or CPU count)",
)


def _load(config_file: str, mode: str, command: str) -> SimConfig:
    return with_sample_mode(load_config(config_file), mode, command)


def _stationary_series(result: EnsembleResult) -> Tuple[np.ndarray, np.ndarray]:
    if not result.good_traces:
        raise NumericalError("every trajectory failed")
    times = result.times
    mask = times >= result.config.burn_time
    return times[mask], result.stack("theta")[:, mask]


def _failed_exit(result: EnsembleResult) -> int:
    if result.failed_indices:
        click.echo(
            f"Error: {len(result.failed_indices)} trajectories failed: {result.failed_indices}",
            err=True,
        )
        return EXIT_NUMERIC
    return EXIT_OK


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="cavsim")
@click.option("-d", "--debug", is_flag=True, help="Enable debug mode")
@click.pass_context
def cli(ctx: click.Context, debug: bool) -> None:
    """
    Simulate laser-driven atoms self-organizing in a lossy cavity.

    Examples:
        cavsim run --config quench.cfg --out runs/quench
        cavsim scan --config steady.cfg --param nbar_rel --values 0.1,0.9,1,1.1,4 --out runs/scan
        cavsim spectrum --config steady.cfg --out runs/spectrum --segment 2048
        cavsim oracle --config steady.cfg --out runs/oracle
        cavsim analyze --in runs/quench --out runs/quench/analysis --t-window 10,100
    """
    ctx.ensure_object(dict)
    ctx.obj["debug"] = debug
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@config_option
@out_option
@click.option(
    "--seed", type=click.IntRange(min=0, max=2**64 - 1), default=None, help="Override the master seed"
)
@click.option(
    "--traj", type=click.IntRange(min=1), default=None, help="Override the number of trajectories"
)
@workers_option
@click.option(
    "--resume", is_flag=True, help="Continue every trajectory from its checkpoint in --out"
)
@click.pass_context
def run(
    ctx: click.Context,
    config_file: str,
    out_dir: str,
    seed: Optional[int],
    traj: Optional[int],
    workers: Optional[int],
    resume: bool,
) -> int:
    """Quench experiment: integrate an ensemble on a log-spaced time grid."""
    cfg = _load(config_file, "log", "run")
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if traj is not None:
        cfg = dataclasses.replace(cfg, n_traj=traj)

    runner = EnsembleRunner(workers=workers, debug=ctx.obj["debug"])
    result = runner.run_ensemble(cfg, out_dir=out_dir, resume=resume)

    click.echo(f"{len(result.good_traces)}/{cfg.n_traj} trajectories written to {out_dir}")
    return _failed_exit(result)


@cli.command()
@config_option
@click.option(
    "--param",
    type=click.Choice(["nbar", "nbar_rel", "n_atoms", "delta_c"]),
    default="nbar",
    show_default=True,
    help="Parameter to scan",
)
@click.option("--values", "values_text", required=True, help="Comma-separated parameter values")
@out_option
@workers_option
@click.pass_context
def scan(
    ctx: click.Context,
    config_file: str,
    param: str,
    values_text: str,
    out_dir: str,
    workers: Optional[int],
) -> int:
    """Steady-state sweep: P(Theta), <|Theta|>, chi and g2(0) per grid point."""
    try:
        values = parse_float_list(values_text)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--values")
    if not values:
        raise click.BadParameter("no values given", param_hint="--values")

    cfg = _load(config_file, "linear", "scan")
    runner = EnsembleRunner(workers=workers, debug=ctx.obj["debug"])
    table = runner.scan(cfg, param, values, out_dir=out_dir)

    columns = ["nbar_rel", "abs_theta", "chi", "g2_0", "kinetic_temperature"]
    click.echo(runner.exporter.format_summary(table[columns].to_dict("records")))
    if int(table["n_failed"].sum()):
        click.echo(f"Error: {int(table['n_failed'].sum())} trajectories failed", err=True)
        return EXIT_NUMERIC
    return EXIT_OK


@cli.command("spectrum")
@config_option
@out_option
@click.option(
    "--segment",
    type=int,
    default=None,
    help="Welch segment length, a power of two (default: up to 1024, half the trace or less)",
)
@click.option(
    "--window", type=click.Choice(WINDOWS), default="hann", show_default=True, help="Window function"
)
@click.option(
    "--max-lag",
    type=click.FloatRange(min=0.0),
    default=200.0,
    show_default=True,
    help="Largest correlation lag in units of 1/kappa",
)
@workers_option
@click.pass_context
def spectrum_command(
    ctx: click.Context,
    config_file: str,
    out_dir: str,
    segment: Optional[int],
    window: str,
    max_lag: float,
    workers: Optional[int],
) -> int:
    """Light emitted by the cavity: S(omega), g1(tau) and g2(tau)."""
    cfg = _load(config_file, "linear", "spectrum")
    runner = EnsembleRunner(workers=workers, debug=ctx.obj["debug"])
    result = runner.run_ensemble(cfg)
    times, data = _stationary_series(result)

    spacing = sampling_interval(times)
    lag_samples = min(int(round(max_lag / spacing)), data.shape[1] - 1)
    spec = spectrum(times, data, segment_len=segment, window=window)
    first = g1(times, data, lag_samples)
    second = g2(times, data, lag_samples)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exporter = runner.exporter
    exporter.write_table(exporter.spectrum_frame(spec), out / "spectrum.csv")
    exporter.write_table(exporter.correlation_frame(first), out / "g1.csv")
    exporter.write_table(exporter.correlation_frame(second), out / "g2.csv")

    summary = [
        {
            "g2_0": float(second.values[0]),
            "mean_power": spec.mean_power,
            "kinetic_temperature": stationary_temperature(result),
            "samples": int(data.size),
        }
    ]
    exporter.write_table(pd.DataFrame(summary), out / "summary.csv")
    click.echo(exporter.format_summary(summary))
    return _failed_exit(result)


@cli.command()
@config_option
@out_option
@click.option("--z-bound", type=float, default=3.0, show_default=True, help="Largest accepted |z| per moment")
@click.option("--distance-bound", type=float, default=0.1, show_default=True, help="Largest accepted KS distance")
@workers_option
@click.pass_context
def oracle(
    ctx: click.Context,
    config_file: str,
    out_dir: str,
    z_bound: float,
    distance_bound: float,
    workers: Optional[int],
) -> int:
    """Compare the long-time SDE ensemble with Metropolis samples of exp(-beta H)."""
    debug = ctx.obj["debug"]
    cfg = _load(config_file, "linear", "oracle")
    runner = EnsembleRunner(workers=workers, debug=debug)
    result = runner.run_ensemble(cfg)
    if not result.good_traces:
        raise NumericalError("every trajectory failed")

    sde = stationary_theta(result)
    mcmc = sample_equilibrium(McmcConfig.from_sim_config(cfg), debug=debug)
    report = compare(sde, mcmc.theta_samples(), z_bound=z_bound, distance_bound=distance_bound)

    rows: List[Dict[str, object]] = []
    first = report.first.as_dict()
    second = report.second.as_dict()
    for name, z in report.z_scores.items():
        rows.append(
            {
                "moment": name,
                "sde": first[name].value,
                "sde_err": first[name].error,
                "mcmc": second[name].value,
                "mcmc_err": second[name].error,
                "z": z,
            }
        )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exporter = runner.exporter
    exporter.write_table(pd.DataFrame(rows), out / "oracle.csv")
    for label, samples in (("sde", sde.theta), ("mcmc", mcmc.theta)):
        hist = theta_histogram(samples, bins=cfg.hist_bins)
        exporter.write_table(exporter.histogram_frame(hist), out / f"theta_hist_{label}.csv")

    click.echo(exporter.format_summary(rows))
    click.echo(f"KS distance {report.distance:.4g} (bound {distance_bound})")
    click.echo(f"MCMC acceptance {mcmc.acceptance_rate:.3f}, width {mcmc.proposal_width:.3f}")
    if result.failed_indices:
        return _failed_exit(result)
    if not report.passed:
        click.echo("FAIL", err=True)
        return EXIT_ORACLE_FAIL
    click.echo("PASS")
    return EXIT_OK


def _parse_window(text: str, hint: str, positive: bool) -> Tuple[float, float]:
    bounds = parse_float_list(text)
    lowest = 0.0 if positive else -math.inf
    if len(bounds) != 2 or not lowest < bounds[0] < bounds[1]:
        condition = "0 < t1 < t2" if positive else "t1 < t2"
        raise click.BadParameter(f"expected t1,t2 with {condition}", param_hint=hint)
    return bounds[0], bounds[1]


def _common_snapshots(result: EnsembleResult) -> Tuple[List[int], np.ndarray, np.ndarray]:
    good = sorted(result.good_traces, key=lambda trace: trace.index)
    if not good or not all(trace.snapshots for trace in good):
        return [], np.zeros((0, 0, 0)), np.zeros((0, 0, 0))
    steps = sorted(set.intersection(*(set(s.steps for s in trace.snapshots) for trace in good)))
    positions = np.array(
        [[snap.x for snap in trace.snapshots if snap.steps in steps] for trace in good]
    )
    momenta = np.array(
        [[snap.p for snap in trace.snapshots if snap.steps in steps] for trace in good]
    )
    return steps, positions, momenta


@cli.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False), help="Directory written by run")
@out_option
@click.option("--msd-window", default=None, help="Fit window t1,t2 for the MSD exponent")
@click.option(
    "--t-window",
    "t_windows",
    multiple=True,
    help="Extra P(Theta) over samples with t1 <= t <= t2; repeatable",
)
@click.option("--bins", type=click.IntRange(min=2), default=None, help="Histogram bins (default: hist_bins)")
def analyze(
    in_dir: str, out_dir: str, msd_window: Optional[str], t_windows: Sequence[str], bins: Optional[int]
) -> int:
    """P(Theta), momentum kurtosis, grating jumps and the MSD exponent from a saved run."""
    window = DEFAULT_MSD_WINDOW
    if msd_window is not None:
        window = _parse_window(msd_window, "--msd-window", positive=True)
    hist_windows = [_parse_window(text, "--t-window", positive=False) for text in t_windows]

    result = load_run(in_dir)
    cfg = result.config
    n_bins = bins or cfg.hist_bins
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exporter = CSVExporter()
    summary: Dict[str, object] = {"trajectories": len(result.good_traces)}

    samples = stationary_theta(result)
    if samples.theta.shape[0]:
        exporter.write_table(
            exporter.histogram_frame(theta_histogram(samples.theta, bins=n_bins)),
            out / "theta_hist.csv",
        )
        summary["abs_theta"] = float(np.mean(np.abs(samples.theta)))

    good = sorted(result.good_traces, key=lambda item: item.index)
    for k, (t1, t2) in enumerate(hist_windows):
        pieces = [trace.theta[(trace.times >= t1) & (trace.times <= t2)] for trace in good]
        pooled = np.concatenate(pieces) if pieces else np.zeros(0)
        if pooled.shape[0] == 0:
            logger.warning(f"No samples with {t1} <= t <= {t2}; skipping that histogram")
            continue
        exporter.write_table(
            exporter.histogram_frame(theta_histogram(pooled, bins=n_bins)),
            out / f"theta_hist_window_{k:02d}.csv",
        )

    jumps = []
    for trace in good:
        stats = grating_jumps(trace.times, trace.theta)
        jumps.append({"index": trace.index, "n_jumps": stats.n_jumps, "mean_residence": stats.mean_residence})
    if jumps:
        exporter.write_table(pd.DataFrame(jumps), out / "jumps.csv")

    steps, positions, momenta = _common_snapshots(result)
    if steps:
        times = [step * cfg.dt for step in steps]
        if momenta.shape[0] * momenta.shape[2] >= 4:
            series = kurtosis_series(times, [momenta[:, k, :] for k in range(len(steps))], cfg.omega_r)
            exporter.write_table(series, out / "kurtosis.csv")

        last_p = momenta[:, -1, :]
        temp = kinetic_temperature(last_p, cfg.omega_r)
        hist = momentum_histogram(last_p, bins=n_bins)
        exporter.write_table(
            exporter.histogram_frame(hist, thermal_momentum_density(hist.centers, temp, cfg.omega_r)),
            out / "momentum_hist.csv",
        )
        exporter.write_table(
            exporter.histogram_frame(position_histogram(positions[:, -1, :])),
            out / "position_hist.csv",
        )
        summary["kinetic_temperature"] = temp

        if steps[0] == 0 and len(steps) > 1:
            curve = msd(np.asarray(times), positions, positions[:, 0, :])
            exporter.write_table(exporter.msd_frame(curve), out / "msd.csv")
            try:
                fit = fit_alpha(curve, window)
                summary["alpha"] = fit.alpha
                summary["alpha_err"] = fit.stderr
            except ValueError as e:
                logger.warning(f"No MSD exponent: {e}")
    else:
        logger.warning(f"{in_dir} holds no common snapshots; skipping kurtosis and MSD")

    exporter.write_table(pd.DataFrame([summary]), out / "summary.csv")
    click.echo(exporter.format_summary([summary]))
    return EXIT_OK


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line and map its outcome to an exit code.

    Args:
        argv: Arguments without the program name, defaults to sys.argv[1:]

    Returns:
        0 success, 1 config or usage error, 2 numerical failure, 3 oracle FAIL
    """
    args = list(sys.argv[1:] if argv is None else argv)
    debug = "-d" in args or "--debug" in args
    if not args:
        with click.Context(cli, info_name="cavsim") as ctx:
            click.echo(cli.get_help(ctx), err=True)
        return EXIT_CONFIG

    try:
        rv = cli.main(args=args, prog_name="cavsim", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_CONFIG
    except NumericalError as e:
        click.echo(f"Error: {e}", err=True)
        if debug:
            click.echo(traceback.format_exc(), err=True)
        return EXIT_NUMERIC
    except (ConfigError, CheckpointError, ValueError, OSError) as e:
        click.echo(f"Error: {e}", err=True)
        if debug:
            click.echo(traceback.format_exc(), err=True)
        return EXIT_CONFIG
    return rv if isinstance(rv, int) else EXIT_OK


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
