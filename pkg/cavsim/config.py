"""Reading and writing of `key = value` simulation configs."""

import dataclasses
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from .models import ConfigError, SimConfig
from .physics import critical_pump

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("n_atoms", "delta_c", "omega_r", "t_end")


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_optional_float(text: str) -> Optional[float]:
    if text.lower() == "none":
        return None
    return float(text)


def _parse_str(text: str) -> str:
    return text


def _parse_optional_str(text: str) -> Optional[str]:
    return None if text.lower() == "none" else text


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "n_atoms": _parse_int,
    "nbar": _parse_float,
    "nbar_rel": _parse_float,
    "delta_c": _parse_float,
    "omega_r": _parse_float,
    "t_end": _parse_float,
    "temp_init": _parse_float,
    "dt": _parse_float,
    "n_traj": _parse_int,
    "seed": _parse_int,
    "sample_mode": _parse_optional_str,
    "sample_points": _parse_int,
    "snapshot_points": _parse_int,
    "scheme": _parse_str,
    "friction_guard": _parse_float,
    "frequency_guard": _parse_float,
    "t_burn": _parse_optional_float,
    "hist_bins": _parse_int,
    "mcmc_sweeps": _parse_int,
    "mcmc_burn_in": _parse_int,
    "mcmc_thinning": _parse_int,
    "mcmc_width": _parse_float,
    "mcmc_flip_rate": _parse_float,
    "gamma_hz": _parse_optional_float,
    "delta_a_over_gamma": _parse_optional_float,
}


def parse_config(text: str) -> SimConfig:
    """
    Parse a line-oriented `key = value` config.

    Blank lines and `#` comments are ignored. ``nbar_rel`` may replace
    ``nbar`` and is multiplied by the threshold nbar_c(delta_c).

    Args:
        text: Config text

    Returns:
        Validated SimConfig

    Raises:
        ConfigError: Unknown or duplicate key, bad value, missing key or
            violated constraint, located at its line
    """
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    last_line = 0

    for number, raw in enumerate(text.splitlines(), 1):
        last_line = number
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError("unknown key", key=key, line=number)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key=key, line=number)
        if not value:
            raise ConfigError("missing value", key=key, line=number)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError:
            kind = _PARSERS[key].__name__.replace("_parse_", "").replace("_", " ")
            raise ConfigError(f"expected {kind}, got {value!r}", key=key, line=number)
        lines[key] = number

    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError("missing required key", key=key, line=last_line)

    if "nbar" in values and "nbar_rel" in values:
        raise ConfigError("give either nbar or nbar_rel, not both", key="nbar_rel", line=lines["nbar_rel"])
    if "nbar_rel" in values:
        if not values["delta_c"] < 0:
            raise ConfigError("must be < 0", key="delta_c", line=lines["delta_c"])
        values["nbar"] = values.pop("nbar_rel") * critical_pump(values["delta_c"])
        lines["nbar"] = lines.pop("nbar_rel")
    if "nbar" not in values:
        raise ConfigError("missing required key (nbar or nbar_rel)", key="nbar", line=last_line)

    try:
        return SimConfig(**values)
    except ConfigError as e:
        raise e.at_line(lines.get(e.key or "", last_line)) from None


def load_config(path: Union[str, Path]) -> SimConfig:
    """Parse a config file."""
    text = Path(path).read_text(encoding="utf-8")
    logger.debug(f"Loaded config from {path}")
    return parse_config(text)


def _render_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: SimConfig) -> str:
    """
    Render a config so that ``parse_config(render_config(cfg)) == cfg``.

    Args:
        cfg: Simulation config

    Returns:
        Config text, one key per line, ``nbar`` given as an absolute value
    """
    out: List[str] = ["# cavsim configuration"]
    for item in dataclasses.fields(cfg):
        out.append(f"{item.name} = {_render_value(getattr(cfg, item.name))}")
    return "\n".join(out) + "\n"
