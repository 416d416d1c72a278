"""Tests for config parsing and rendering."""

import pytest

from cavsim.config import load_config, parse_config, render_config
from cavsim.models import ConfigError

QUENCH = """\
# N=200 atoms and 500 trajectories at 4 nbar_c
n_atoms = 200
nbar_rel = 4
delta_c = -1
omega_r = 2.57e-3
temp_init = 0.5
t_end = 1e5
n_traj = 500
sample_mode = log   # quench spans many decades
"""

MINIMAL = """\
n_atoms = 10
nbar = 0.1
delta_c = -1.0
omega_r = 0.01
t_end = 100
"""


class TestParseConfig:
    """Test parse_config."""

    def test_quench_preset(self):
        """Test the quench preset with a relative pump strength."""
        cfg = parse_config(QUENCH)

        assert cfg.n_atoms == 200
        assert cfg.nbar == pytest.approx(2.0)
        assert cfg.n_traj == 500
        assert cfg.sample_mode == "log"
        assert cfg.t_end == 1e5

    def test_minimal_defaults(self):
        """Test defaults for omitted keys."""
        cfg = parse_config(MINIMAL)
        assert cfg.dt == 0.1
        assert cfg.seed == 0
        assert cfg.sample_mode is None

    def test_errors_carry_line_numbers(self):
        """Test that each kind of error points at its line."""
        test_cases = [
            (MINIMAL.replace("delta_c = -1.0", "delta_c = 1"), 3, "delta_c"),
            (MINIMAL + "colour = red\n", 6, "colour"),
            (MINIMAL + "n_atoms = 3\n", 6, "n_atoms"),
            (MINIMAL.replace("n_atoms = 10", "n_atoms = ten"), 1, "n_atoms"),
            (MINIMAL.replace("t_end = 100", "t_end = 0.01"), 5, "t_end"),
            (MINIMAL + "nbar_rel = 2\n", 6, "nbar_rel"),
            (MINIMAL + "just words\n", 6, None),
        ]

        for text, line, key in test_cases:
            with pytest.raises(ConfigError) as info:
                parse_config(text)
            assert info.value.line == line, f"{info.value}"
            assert info.value.key == key, f"{info.value}"

    def test_missing_required_key(self):
        """Test that a missing key is reported."""
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("omega_r = 0.01\n", ""))
        assert info.value.key == "omega_r"

    def test_missing_pump(self):
        """Test that nbar or nbar_rel is required."""
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("nbar = 0.1\n", ""))
        assert info.value.key == "nbar"

    def test_comments_and_blank_lines(self):
        """Test that comments and blank lines are ignored."""
        text = "\n# header\n\n" + MINIMAL.replace("t_end = 100", "t_end = 100  # long")
        assert parse_config(text).t_end == 100.0


class TestRenderConfig:
    """Test render_config."""

    def test_round_trip(self):
        """Test that rendering is a fixpoint of parsing."""
        cfg = parse_config(QUENCH)
        text = render_config(cfg)

        assert parse_config(text) == cfg
        assert render_config(parse_config(text)) == text

    def test_renders_absolute_pump(self):
        """Test that nbar_rel is resolved."""
        text = render_config(parse_config(QUENCH))
        assert "nbar = 2.0" in text
        assert "nbar_rel" not in text

    def test_load_config(self, tmp_path):
        """Test reading from a file."""
        path = tmp_path / "run.cfg"
        path.write_text(MINIMAL)
        assert load_config(path).n_atoms == 10
