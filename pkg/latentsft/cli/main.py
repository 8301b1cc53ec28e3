"""Command Line Interface for latentsft."""

from __future__ import annotations

import sys

import typer

from latentsft.cli.analyze import analyze, prelim
from latentsft.cli.common import console, err_console, error_payload
from latentsft.cli.config import config
from latentsft.cli.data import gen_data
from latentsft.cli.infer import infer
from latentsft.cli.reproduce import reproduce
from latentsft.cli.train import train_cot, train_stage1, train_stage2
from latentsft.cli.version import version
from latentsft.exceptions.errors import LatentSFTError


def callback(ctx: typer.Context) -> None:
    """Show help when no subcommand is given."""
    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())
        raise typer.Exit(0)


cli: typer.Typer = typer.Typer(
    name="latentsft",
    help="Latent reasoning in the embedding column space, at desk scale.",
    no_args_is_help=False,
    add_completion=True,
    pretty_exceptions_show_locals=False,
    pretty_exceptions_short=True,
    rich_markup_mode="rich",
    callback=callback,
    invoke_without_command=True,
)

cli.add_typer(
    gen_data,
    name="gen-data",
    help="Generate the synthetic corpus",
    rich_help_panel="Data",
)
cli.add_typer(
    train_cot,
    name="train-cot",
    help="Train the explicit CoT-SFT model",
    rich_help_panel="Training",
)
cli.add_typer(
    train_stage1,
    name="train-stage1",
    help="Stage 1: latent-token generation",
    no_args_is_help=True,
    rich_help_panel="Training",
)
cli.add_typer(
    train_stage2,
    name="train-stage2",
    help="Stage 2: autonomous latent generation",
    no_args_is_help=True,
    rich_help_panel="Training",
)
cli.add_typer(
    infer,
    name="infer",
    help="Decode and evaluate a dataset",
    no_args_is_help=True,
    rich_help_panel="Evaluation",
)
cli.add_typer(
    analyze,
    name="analyze",
    help="ECR, N_eff and hidden-state analysis",
    no_args_is_help=True,
    rich_help_panel="Evaluation",
)
cli.add_typer(
    prelim,
    name="prelim",
    help="Hidden states versus token embeddings",
    no_args_is_help=True,
    rich_help_panel="Evaluation",
)
cli.add_typer(
    reproduce,
    name="reproduce",
    help="Run the full pipeline and the acceptance checks",
    rich_help_panel="Evaluation",
)
cli.add_typer(
    config,
    name="config",
    help="Inspect configuration",
    no_args_is_help=True,
    rich_help_panel="Client Info",
)
cli.add_typer(
    version,
    name="version",
    help="View version info",
    no_args_is_help=False,
    rich_help_panel="Client Info",
)


def main() -> None:
    """Main entry point."""
    try:
        cli()
    except LatentSFTError as error:
        err_console.print(error_payload(error), markup=False, highlight=False)
        sys.exit(error.exit_code)


if __name__ == "__main__":
    main()
