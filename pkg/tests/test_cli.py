"""Tests for the command-line interface."""

import pytest

from wedge_kit.cli import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUNTIME_ERROR, _build_parser, app
from wedge_kit.config import parse_config


def write_config(path, text):
    path.write_text(text)
    return str(path)


class TestParser:
    """Tests for argument parsing."""

    def test_subcommands(self):
        """Test that every command is registered."""
        parser = _build_parser()
        for command in (
            "gen-data",
            "run",
            "sweep-tau",
            "sweep-method",
            "sweep-points",
            "sweep-corpus",
            "sweep-reference",
            "bench",
            "print-config",
        ):
            args = parser.parse_args([command])
            assert args.command == command
            assert callable(args.func)

    def test_eval_requires_checkpoint(self):
        """Test that eval without --checkpoint is a usage error."""
        with pytest.raises(SystemExit) as info:
            _build_parser().parse_args(["eval"])
        assert info.value.code == 2

    def test_command_required(self):
        """Test that a bare invocation is a usage error."""
        with pytest.raises(SystemExit):
            _build_parser().parse_args([])


class TestApp:
    """Tests for app exit codes and output."""

    def test_print_config_round_trips(self, capsys):
        """Test that print-config output is a valid configuration file."""
        assert app(["print-config", "--seed", "5"]) == EXIT_OK
        cfg = parse_config(capsys.readouterr().out)
        assert cfg.experiment.seeds == (5,)

    def test_invalid_config_value(self, tmp_path):
        """Test that a bad configuration value exits with the configuration code."""
        path = write_config(tmp_path / "bad.ini", "[injection]\nmethod = wct\n")
        assert app(["print-config", "--config", path]) == EXIT_CONFIG_ERROR

    def test_unknown_section(self, tmp_path):
        """Test that an unknown section exits with the configuration code."""
        path = write_config(tmp_path / "bad.ini", "[optimizer]\nlr = 1\n")
        assert app(["run", "--config", path]) == EXIT_CONFIG_ERROR

    def test_missing_data_is_runtime_error(self, tmp_path):
        """Test that running without generated data exits with the runtime code."""
        path = write_config(tmp_path / "exp.ini", f"[paths]\ndata_dir = {tmp_path.as_posix()}/x\n")
        assert app(["run", "--config", path, "--out", str(tmp_path / "runs")]) == EXIT_RUNTIME_ERROR

    def test_gen_data_out_names_data_dir(self, tmp_path):
        """Test that --out redirects the generated data."""
        path = write_config(
            tmp_path / "exp.ini",
            "[data]\nheight = 8\nwidth = 8\nsource_count = 1\nweb_count = 1\n"
            "target_count = 1\nofftopic_count = 1\n",
        )

        code = app(["gen-data", "--config", path, "--out", str(tmp_path / "d"), "--seed", "3"])

        assert code == EXIT_OK
        assert (tmp_path / "d" / "source" / "manifest.jsonl").exists()
        assert '"seed": 3' in (tmp_path / "d" / "domains.json").read_text()
