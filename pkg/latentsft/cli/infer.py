"""Generation and evaluation on a dataset."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, get_args

import click
import typer
from rich import box
from rich.table import Table

from latentsft.cli.common import (
    ConfigOption,
    DebugOption,
    SetOption,
    ThreadsOption,
    console,
    reporting,
    resolve_settings,
    snapshot_outputs,
)
from latentsft.models.types import ReasoningMode, StopRule
from latentsft.pipeline import evaluate, load_problems, resolve_checkpoint, run_snapshot
from latentsft.synthdata.corpus import TEST_FILE

infer = typer.Typer(name="infer", no_args_is_help=True)


@infer.callback(invoke_without_command=True)
def run(
    checkpoint: Annotated[
        Path, typer.Option("--checkpoint", help="Run or checkpoint directory.")
    ],
    dataset: Annotated[
        Path,
        typer.Option(
            "--dataset", help="JSONL problems, or a corpus directory (uses test split)."
        ),
    ],
    trace_out: Annotated[
        Path | None, typer.Option("--trace-out", help="Write reasoning traces as JSON Lines.")
    ] = None,
    report_out: Annotated[
        Path | None, typer.Option("--report-out", help="Write the evaluation report as JSON.")
    ] = None,
    mode: Annotated[
        ReasoningMode | None,
        typer.Option(
            "--mode",
            click_type=click.Choice(list(get_args(ReasoningMode)), case_sensitive=True),
            metavar="|".join(get_args(ReasoningMode)),
            help="Latent reasoning or an explicit chain (CoT-SFT baseline).",
        ),
    ] = None,
    stop_rule: Annotated[
        StopRule | None,
        typer.Option(
            "--stop-rule",
            click_type=click.Choice(list(get_args(StopRule)), case_sensitive=True),
            metavar="|".join(get_args(StopRule)),
            help="Latent termination rule.",
        ),
    ] = None,
    budget: Annotated[
        int | None, typer.Option("--budget", min=1, help="Latent step budget.")
    ] = None,
    greedy: Annotated[
        bool | None, typer.Option("--greedy/--sample", help="Argmax or nucleus answer decoding.")
    ] = None,
    config: ConfigOption = None,
    sets: SetOption = None,
    threads: ThreadsOption = None,
    debug: DebugOption = False,
) -> None:
    """Decode every problem over the evaluation seeds and report exact-match accuracy.

    Settings default to the snapshot of the checkpoint's run unless --config is given.
    """
    with reporting(debug):
        resolved = resolve_checkpoint(checkpoint)
        settings = resolve_settings(
            config,
            sets,
            {
                "decode": {
                    "reasoning": mode,
                    "stop_rule": stop_rule,
                    "latent_budget": budget,
                    "greedy": greedy,
                },
                "threads": threads,
            },
            base=run_snapshot(resolved),
        )
        problems = load_problems(dataset, TEST_FILE)
        snapshot_outputs(settings, trace_out, report_out)
        result = evaluate(settings, resolved, problems, trace_out, report_out)
        report = result.report

        table = Table(title=f"Evaluation ({report.mode})", box=box.SIMPLE, show_header=False)
        table.add_column("Metric", style="bold green")
        table.add_column("Value", style="white")
        table.add_row("Samples", str(report.samples))
        table.add_row("Seeds", str(report.accuracy.runs))
        table.add_row("Pass@1", str(report.accuracy))
        table.add_row("#L", str(report.latent_length))
        table.add_row("Answer length", str(report.answer_length))
        table.add_row("Efficiency", f"{report.efficiency:.4f}")
        table.add_row("Truncated", str(report.truncated))
        console.print(table)
