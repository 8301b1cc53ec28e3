"""Test CLI commands with --help option."""

from __future__ import annotations

import pytest
from typer.testing import CliRunner

from latentsft.cli.main import cli

runner = CliRunner()

COMMANDS = [
    [],
    ["gen-data"],
    ["train-cot"],
    ["train-stage1"],
    ["train-stage2"],
    ["infer"],
    ["analyze"],
    ["analyze", "ecr"],
    ["analyze", "neff"],
    ["analyze", "prelim"],
    ["prelim"],
    ["reproduce"],
    ["config"],
    ["config", "show"],
    ["config", "init"],
    ["version"],
]


@pytest.mark.parametrize("command", COMMANDS)
def test_cli_help(command: list[str]) -> None:
    """Test CLI commands with --help option."""
    result = runner.invoke(cli, [*command, "--help"])
    assert result.exit_code == 0
