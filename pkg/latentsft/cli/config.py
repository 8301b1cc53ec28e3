"""Configuration inspection."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, get_args

import click
import typer

from latentsft.cli.common import ConfigOption, SetOption, console, reporting, resolve_settings
from latentsft.models.config import preset as preset_overrides
from latentsft.models.types import Preset

config = typer.Typer(name="config", no_args_is_help=True)


@config.command("show")
def show(config_file: ConfigOption = None, sets: SetOption = None) -> None:
    """Displays the resolved configuration."""
    with reporting():
        settings = resolve_settings(config_file, sets)
        if config_file is not None:
            console.print(f"[dim]{config_file} discovered[/dim]")
        console.print(settings.model_dump(mode="json", by_alias=True, exclude_none=True))


@config.command("init")
def init(
    destination: Annotated[Path, typer.Argument(help="YAML file to write.")],
    preset: Annotated[
        Preset | None,
        typer.Option(
            "--preset",
            "-p",
            click_type=click.Choice(list(get_args(Preset)), case_sensitive=True),
            metavar="|".join(get_args(Preset)),
            help="Start from a named preset.",
        ),
    ] = None,
    sets: SetOption = None,
) -> None:
    """Writes a config file with every setting spelled out."""
    with reporting():
        settings = resolve_settings(None, sets, preset_overrides(preset) if preset else None)
        destination.parent.mkdir(parents=True, exist_ok=True)
        settings.save_yaml(destination)
        console.print(f"[green]{destination}[/green]")
