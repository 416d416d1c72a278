"""CSV exporter for traces, aggregates and analysis tables."""

import io
import logging
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from . import __version__
from .models import CorrelationCurve, Histogram, MsdCurve, Spectrum, TrajectoryTrace

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
TRACE_COLUMNS = ["t", "theta", "p_s", "kinetic", "photons"]


def header_line(version: str = __version__) -> str:
    return f"# cavsim v{version}"


def read_table(path: Union[str, Path]) -> pd.DataFrame:
    """
    Read a table written by CSVExporter.

    Args:
        path: CSV file

    Returns:
        DataFrame with the exact float values that were written
    """
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().rstrip("\n")
        if not first.startswith("# cavsim v"):
            raise ValueError(f"{path} is not a cavsim table (first line {first!r})")
        return pd.read_csv(handle, float_precision="round_trip")


class CSVExporter:
    """Writes plot-ready CSV tables with a version header."""

    def __init__(self, version: str = __version__) -> None:
        """
        Initialize the CSV exporter.

        Args:
            version: Version string written in the first line
        """
        self.version = version

    def _write(self, frame: pd.DataFrame, handle: TextIO) -> None:
        handle.write(header_line(self.version) + "\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    def write_table(self, frame: pd.DataFrame, output_file: Union[str, Path]) -> None:
        """
        Export a table to a CSV file.

        Args:
            frame: Table to export
            output_file: Path to output CSV file
        """
        with open(output_file, "w", encoding="utf-8", newline="") as handle:
            self._write(frame, handle)
        logger.debug(f"Wrote {len(frame)} rows to {output_file}")

    def get_csv_string(self, frame: pd.DataFrame) -> str:
        """
        Get CSV content as string.

        Args:
            frame: Table to render

        Returns:
            CSV content including the version header
        """
        output = io.StringIO()
        self._write(frame, output)
        return output.getvalue()

    def trace_frame(self, trace: TrajectoryTrace) -> pd.DataFrame:
        """Sampled series of one trajectory."""
        return pd.DataFrame(
            {
                "t": trace.times,
                "theta": trace.theta,
                "p_s": trace.p_s,
                "kinetic": trace.kinetic,
                "photons": trace.photons,
            },
            columns=TRACE_COLUMNS,
        )

    def export_trace(self, trace: TrajectoryTrace, output_file: Union[str, Path]) -> None:
        self.write_table(self.trace_frame(trace), output_file)

    def histogram_frame(
        self, hist: Histogram, reference: Optional[npt.ArrayLike] = None
    ) -> pd.DataFrame:
        """
        Histogram as a table of bins.

        Args:
            hist: Histogram
            reference: Optional reference density evaluated at the bin centers

        Returns:
            Columns left, right, center, count, density[, reference]
        """
        data: Dict[str, npt.ArrayLike] = {
            "left": hist.edges[:-1],
            "right": hist.edges[1:],
            "center": hist.centers,
            "count": hist.counts,
            "density": hist.density,
        }
        if reference is not None:
            data["reference"] = np.asarray(reference, dtype=np.float64)
        return pd.DataFrame(data)

    def correlation_frame(self, curve: CorrelationCurve) -> pd.DataFrame:
        return pd.DataFrame({"tau": curve.lags, curve.kind: curve.values, "stderr": curve.errors})

    def spectrum_frame(self, spec: Spectrum) -> pd.DataFrame:
        return pd.DataFrame({"omega": spec.omega, "density": spec.density})

    def msd_frame(self, curve: MsdCurve) -> pd.DataFrame:
        return pd.DataFrame({"t": curve.times, "msd": curve.msd, "stderr": curve.stderr})

    def format_summary(self, rows: List[Dict[str, object]]) -> str:
        """
        Render key/value summary rows for the console.

        Args:
            rows: One dict per row, sharing their keys

        Returns:
            Aligned plain-text table
        """
        if not rows:
            return "No results."
        frame = pd.DataFrame(rows)
        return frame.to_string(index=False, float_format=lambda v: f"{v:.6g}")
