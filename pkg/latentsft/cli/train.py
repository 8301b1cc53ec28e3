"""Training commands: CoT-SFT, stage 1 and stage 2."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, get_args

import click
import typer

from latentsft.cli.common import (
    ConfigOption,
    DebugOption,
    OutOption,
    ProgressOption,
    SetOption,
    ThreadsOption,
    console,
    reporting,
    resolve_settings,
)
from latentsft.pipeline import resolve_checkpoint, run_cot, run_snapshot, run_stage1, run_stage2

Ablation = Literal["none", "hidden_state", "no_ltim", "no_ltsum"]

DataOption = Annotated[
    Path | None,
    typer.Option("--data", "-d", help="Corpus directory written by gen-data."),
]
ResumeOption = Annotated[
    bool, typer.Option("--resume", help="Continue from the newest checkpoint in --out.")
]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Training seed.")]
RatioOption = Annotated[
    int | None, typer.Option("--ratio", "-r", min=1, help="Compression ratio r.")
]

train_cot = typer.Typer(name="train-cot", no_args_is_help=False)
train_stage1 = typer.Typer(name="train-stage1", no_args_is_help=True)
train_stage2 = typer.Typer(name="train-stage2", no_args_is_help=True)


def _ablation_flags(ablation: Ablation | None) -> dict[str, bool | None]:
    flags: dict[str, bool | None] = {name: None for name in get_args(Ablation)[1:]}
    if ablation is not None:
        for name in flags:
            flags[name] = name == ablation
    return flags


@train_cot.callback(invoke_without_command=True)
def cot(
    data: DataOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    steps: Annotated[int | None, typer.Option("--steps", min=0, help="Optimizer steps.")] = None,
    config: ConfigOption = None,
    sets: SetOption = None,
    resume: ResumeOption = False,
    threads: ThreadsOption = None,
    progress: ProgressOption = True,
    debug: DebugOption = False,
) -> None:
    """Fine-tune on explicit chains (the CoT-SFT baseline and initializer)."""
    with reporting(debug):
        settings = resolve_settings(
            config,
            sets,
            {"train": {"seed": seed, "steps_cot": steps}, "threads": threads},
        )
        checkpoint = run_cot(
            settings,
            data or settings.output_root / "data",
            out or settings.output_root / "cot",
            resume=resume,
            progress=progress,
        )
        console.print(f"[green]CoT-SFT checkpoint:[/green] {checkpoint}")


@train_stage1.callback(invoke_without_command=True)
def stage1(
    init: Annotated[
        Path, typer.Option("--init", "-i", help="CoT-SFT run or checkpoint directory.")
    ],
    data: DataOption = None,
    out: OutOption = None,
    ratio: RatioOption = None,
    ablation: Annotated[
        Ablation | None,
        typer.Option(
            "--ablation",
            click_type=click.Choice(list(get_args(Ablation)), case_sensitive=True),
            metavar="|".join(get_args(Ablation)),
            help="Train an ablated variant.",
        ),
    ] = None,
    seed: SeedOption = None,
    config: ConfigOption = None,
    sets: SetOption = None,
    resume: ResumeOption = False,
    threads: ThreadsOption = None,
    progress: ProgressOption = True,
    debug: DebugOption = False,
) -> None:
    """Latent-token generation with the alternating EM schedule.

    Settings default to the snapshot of the CoT-SFT run unless --config is given.
    """
    with reporting(debug):
        settings = resolve_settings(
            config,
            sets,
            {
                "train": {"ratio": ratio, "seed": seed, **_ablation_flags(ablation)},
                "threads": threads,
            },
            base=run_snapshot(resolve_checkpoint(init)),
        )
        run = run_stage1(
            settings,
            data or settings.output_root / "data",
            init,
            out or settings.output_root / f"stage1-r{settings.train.ratio}",
            resume=resume,
            progress=progress,
        )
        console.print(f"[green]Stage-1 run:[/green] {run}")


@train_stage2.callback(invoke_without_command=True)
def stage2(
    stage1_run: Annotated[
        Path, typer.Option("--stage1", help="Stage-1 run directory (labels and decoder).")
    ],
    data: DataOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    config: ConfigOption = None,
    sets: SetOption = None,
    resume: ResumeOption = False,
    threads: ThreadsOption = None,
    progress: ProgressOption = True,
    debug: DebugOption = False,
) -> None:
    """Autonomous latent generation from cached stage-1 labels.

    Settings default to the snapshot of the stage-1 run unless --config is given.
    """
    with reporting(debug):
        settings = resolve_settings(
            config,
            sets,
            {"train": {"seed": seed}, "threads": threads},
            base=run_snapshot(stage1_run),
        )
        checkpoint = run_stage2(
            settings,
            data or settings.output_root / "data",
            stage1_run,
            out or settings.output_root / f"stage2-r{settings.train.ratio}",
            resume=resume,
            progress=progress,
        )
        console.print(f"[green]Latent-SFT checkpoint:[/green] {checkpoint}")
