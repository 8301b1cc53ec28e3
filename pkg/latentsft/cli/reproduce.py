"""The full pipeline with the acceptance checks."""

from __future__ import annotations

from typing import Annotated, get_args

import click
import typer
from rich import box
from rich.table import Table

from latentsft.cli.common import (
    DebugOption,
    OutOption,
    ProgressOption,
    SetOption,
    ThreadsOption,
    console,
    reporting,
)
from latentsft.models.config import Settings, parse_overrides
from latentsft.models.types import Preset
from latentsft.pipeline import ACCEPTANCE_FILE
from latentsft.pipeline import reproduce as run_reproduce

reproduce = typer.Typer(name="reproduce", no_args_is_help=False)


@reproduce.callback(invoke_without_command=True)
def run(
    preset: Annotated[
        Preset,
        typer.Option(
            "--preset",
            "-p",
            click_type=click.Choice(list(get_args(Preset)), case_sensitive=True),
            metavar="|".join(get_args(Preset)),
            help="Named configuration.",
        ),
    ] = "desk",
    out: OutOption = None,
    sets: SetOption = None,
    threads: ThreadsOption = None,
    progress: ProgressOption = True,
    debug: DebugOption = False,
) -> None:
    """Generate data, train CoT-SFT, Latent-SFT (r=2, r=4) and ablations, then check the criteria.

    Exits with 1 when any criterion fails.
    """
    with reporting(debug):
        target = out or Settings.load().output_root / f"reproduce-{preset}"
        report = run_reproduce(preset, target, parse_overrides(sets), threads or 1, progress)

    table = Table(title=f"Acceptance ({preset})", box=box.SIMPLE)
    table.add_column("CRITERION", style="cyan")
    table.add_column("RESULT")
    table.add_column("DETAIL", style="dim")
    for criterion in report.criteria:
        verdict = "[green]pass[/green]" if criterion.passed else "[red]fail[/red]"
        detail = ", ".join(
            f"{key}={value:.4g}" if isinstance(value, float) else f"{key}={value}"
            for key, value in criterion.detail.items()
        )
        table.add_row(criterion.name, verdict, detail)
    console.print(table)
    console.print(f"[dim]{target / ACCEPTANCE_FILE}[/dim]")
    if not report.passed:
        raise typer.Exit(1)
