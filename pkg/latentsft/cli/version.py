"""Version information."""

from __future__ import annotations

import os
import platform
import sys
from importlib import metadata

import typer
from rich.console import Console
from rich.table import Table

from latentsft import __version__

console = Console()

KEY_DEPENDENCIES = ("numpy", "scipy", "pydantic", "pydantic-settings", "typer", "rich")


def callback(
    debug: bool = typer.Option(
        default=False,
        is_flag=True,
        help="Show detailed information for bug reports.",
    ),
) -> None:
    """latentsft version information."""
    if not debug:
        console.print(f"latentsft {__version__}")
        raise typer.Exit(0)

    console.print("\n[bold blue]latentsft Debug Information[/bold blue]")
    table = Table(show_header=False, box=None, padding=(0, 1))
    table.add_column("Field", style="bold green", width=22)
    table.add_column("Value", style="white")
    table.add_row("Version", __version__)
    table.add_row("Source", _installation())
    table.add_row("", "")
    table.add_row("Python Version", platform.python_version())
    table.add_row("Python Executable", sys.executable)
    table.add_row("", "")
    table.add_row("Operating System", platform.system())
    table.add_row("Architecture", platform.machine())
    table.add_row("CPU Count", str(os.cpu_count() or 1))
    console.print(table)

    console.print("\n[bold blue]Numerical Stack[/bold blue]")
    deps = Table(show_header=True, box=None)
    deps.add_column("Package", style="bold green", width=22)
    deps.add_column("Version", style="white")
    for name in KEY_DEPENDENCIES:
        deps.add_row(name, _package_version(name))
    console.print(deps)
    console.print("\n[dim]Bitwise reproducibility holds for --threads 1 on the same stack.[/dim]")
    raise typer.Exit(0)


version = typer.Typer(
    name="version",
    help="Show latentsft version information",
    no_args_is_help=False,
    callback=callback,
    invoke_without_command=True,
)


def _package_version(name: str) -> str:
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "not installed"


def _installation() -> str:
    """``editable``, ``wheel`` or ``source`` depending on how the package was found."""
    try:
        dist = metadata.distribution("latentsft")
    except metadata.PackageNotFoundError:
        return "source (not installed)"
    files = [str(file) for file in dist.files or []]
    if any(name.endswith((".pth", ".egg-link")) for name in files):
        return "editable"
    return "wheel"
