"""Synthetic corpus generation."""

from __future__ import annotations

import re
from typing import Annotated

import typer

from latentsft.cli.common import (
    ConfigOption,
    DebugOption,
    OutOption,
    SetOption,
    console,
    reporting,
    resolve_settings,
)
from latentsft.synthdata.corpus import build_corpus, save_corpus

_RANGE = re.compile(r"^\s*(\d+)\s*(?:\.\.\s*(\d+))?\s*$")

gen_data = typer.Typer(name="gen-data", no_args_is_help=False)


def parse_steps(value: str | None) -> tuple[int, int] | None:
    """``"2..5"`` to ``(2, 5)``; a single number fixes both ends.

    Raises:
        typer.BadParameter: On anything else.
    """
    if value is None:
        return None
    match = _RANGE.match(value)
    if match is None:
        msg = f"expected LOW..HIGH, got {value!r}"
        raise typer.BadParameter(msg, param_hint="--steps")
    low = int(match.group(1))
    return low, int(match.group(2) or low)


@gen_data.callback(invoke_without_command=True)
def generate(
    seed: Annotated[int | None, typer.Option("--seed", help="Corpus seed.")] = None,
    n: Annotated[
        int | None, typer.Option("--n", "-n", min=1, help="Problems before the split.")
    ] = None,
    steps: Annotated[
        str | None, typer.Option("--steps", help="Step-count range, e.g. 2..5.")
    ] = None,
    multichain: Annotated[
        bool | None,
        typer.Option("--multichain/--no-multichain", help="Also build the multi-chain test set."),
    ] = None,
    out: OutOption = None,
    config: ConfigOption = None,
    sets: SetOption = None,
    debug: DebugOption = False,
) -> None:
    """Generate train, test and multi-chain splits."""
    bounds = parse_steps(steps)
    with reporting(debug):
        settings = resolve_settings(
            config,
            sets,
            {
                "data": {
                    "seed": seed,
                    "n_problems": n,
                    "min_steps": bounds[0] if bounds else None,
                    "max_steps": bounds[1] if bounds else None,
                    "multichain": multichain,
                }
            },
        )
        target = out or settings.output_root / "data"
        settings.snapshot(target)
        manifest = save_corpus(build_corpus(settings.data), target, settings.data)
        console.print_json(manifest.model_dump_json())
