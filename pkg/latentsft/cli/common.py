"""Options and helpers shared by every command."""

from __future__ import annotations

import json
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING, Annotated, Any

import typer
from rich.console import Console

from latentsft.exceptions.errors import LatentSFTError
from latentsft.models.config import Settings, merge, parse_overrides
from latentsft.training.runs import METRICS_FILE
from latentsft.utils.logging import enable_debug

if TYPE_CHECKING:
    from collections.abc import Iterator

console = Console()
err_console = Console(stderr=True, soft_wrap=True)

ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="TOML or YAML config file."),
]
SetOption = Annotated[
    list[str] | None,
    typer.Option("--set", "-s", help="Override a setting, e.g. train.ratio=4. Repeatable."),
]
DebugOption = Annotated[bool, typer.Option("--debug", help="Enable debug logging.")]
ThreadsOption = Annotated[
    int | None,
    typer.Option("--threads", "-t", min=1, help="Worker threads (1 is bitwise reproducible)."),
]
OutOption = Annotated[Path | None, typer.Option("--out", "-o", help="Output location.")]
ProgressOption = Annotated[
    bool, typer.Option("--progress/--no-progress", help="Show progress bars.")
]


def error_payload(error: LatentSFTError) -> str:
    """One-line JSON description of ``error``."""
    return json.dumps(
        {"error": type(error).__name__, "message": error.message, "exit_code": error.exit_code}
    )


@contextmanager
def reporting(debug: bool = False) -> Iterator[None]:
    """Turn library errors into a JSON line on stderr and their exit code."""
    if debug:
        enable_debug()
    try:
        yield
    except LatentSFTError as error:
        err_console.print(error_payload(error), markup=False, highlight=False)
        raise typer.Exit(error.exit_code) from error


def resolve_settings(
    config: Path | None = None,
    sets: list[str] | None = None,
    flags: dict[str, Any] | None = None,
    base: dict[str, Any] | None = None,
) -> Settings:
    """Settings from (lowest first) ``base``, ``config``, dedicated flags and ``--set``.

    ``base`` is a snapshot of an upstream run and is ignored when an explicit
    config file is given.
    """
    overrides = {} if config is not None else dict(base or {})
    overrides = merge(overrides, _compact(flags or {}))
    overrides = merge(overrides, parse_overrides(sets))
    return Settings.load(config, overrides)


def _compact(flags: dict[str, Any]) -> dict[str, Any]:
    """Drop unset (``None``) flags, recursing into sections."""
    result: dict[str, Any] = {}
    for key, value in flags.items():
        if isinstance(value, dict):
            nested = _compact(value)
            if nested:
                result[key] = nested
        elif value is not None:
            result[key] = value
    return result


def snapshot_outputs(settings: Settings, *outputs: Path | None) -> list[Path]:
    """Write ``config.json`` next to every output file.

    Directories that hold a training run keep the run's own snapshot.

    Returns:
        list[Path]: The snapshots written.
    """
    written: list[Path] = []
    for parent in dict.fromkeys(path.parent for path in outputs if path is not None):
        if (parent / METRICS_FILE).exists():
            continue
        written.append(settings.snapshot(parent))
    return written
