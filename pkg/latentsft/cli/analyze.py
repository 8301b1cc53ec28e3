"""Trace and checkpoint analysis."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Annotated

import typer

from latentsft.analysis.alignment import DEFAULT_EPS, DEFAULT_K, summarize_ecr, summarize_neff
from latentsft.cli.common import (
    ConfigOption,
    DebugOption,
    OutOption,
    SetOption,
    console,
    reporting,
    resolve_settings,
)
from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.inference import read_traces
from latentsft.pipeline import (
    ecr_per_sample,
    load_problems,
    neff_per_sample,
    resolve_checkpoint,
    run_prelim,
    run_snapshot,
)
from latentsft.synthdata.corpus import MULTICHAIN_FILE, TEST_FILE, read_multichain
from latentsft.synthdata.tokenizer import DEFAULT_ALPHABET, Tokenizer

analyze = typer.Typer(name="analyze", no_args_is_help=True)
prelim = typer.Typer(name="prelim", no_args_is_help=True)

TraceOption = Annotated[Path, typer.Option("--trace", help="Trace file written by infer.")]
RatioOption = Annotated[
    int | None,
    typer.Option("--r", "--ratio", min=1, help="Compression ratio (default: from the trace)."),
]


def _header_ratio(config: dict[str, object], ratio: int | None) -> int:
    value = ratio if ratio is not None else config.get("ratio")
    if value is None:
        raise InvalidArgumentError("--r", "the trace does not record a ratio")
    return int(value)  # type: ignore[call-overload]


@analyze.command("ecr")
def ecr(
    trace: TraceOption,
    dataset: Annotated[Path, typer.Option("--dataset", help="Problems the trace was decoded on.")],
    ratio: RatioOption = None,
    k: Annotated[int, typer.Option("--k", min=1, help="Top-K size.")] = 10,
    out: OutOption = None,
    debug: DebugOption = False,
) -> None:
    """ECR@K per sample (CSV with --out) and its summary."""
    with reporting(debug):
        header, entries = read_traces(trace)
        tokenizer = Tokenizer(str(header.config.get("alphabet", DEFAULT_ALPHABET)))
        r = _header_ratio(header.config, ratio)
        values = ecr_per_sample(entries, load_problems(dataset, TEST_FILE), tokenizer, r, k)
        if not values:
            raise InvalidArgumentError("--trace", "no latent samples match the dataset")
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            with out.open("w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(("id", "ecr"))
                writer.writerows((key, f"{value:.6g}") for key, value in values.items())
        console.print_json(summarize_ecr(list(values.values()), k, r).model_dump_json())


@analyze.command("neff")
def neff(
    trace: TraceOption,
    multichain: Annotated[
        Path, typer.Option("--multichain", help="Multi-chain JSONL, or a corpus directory.")
    ],
    ratio: RatioOption = None,
    k: Annotated[int, typer.Option("--k", min=1, help="Top-K size, capped at V.")] = DEFAULT_K,
    tau: Annotated[float, typer.Option("--tau", min=0.0, help="Posterior temperature.")] = 1.0,
    eps: Annotated[
        float, typer.Option("--eps", help="Mass floor inside the logarithm.")
    ] = DEFAULT_EPS,
    out: OutOption = None,
    debug: DebugOption = False,
) -> None:
    """Path posterior, N_eff and Top-2 per sample (JSON with --out) and their summary."""
    with reporting(debug):
        header, entries = read_traces(trace)
        tokenizer = Tokenizer(str(header.config.get("alphabet", DEFAULT_ALPHABET)))
        source = multichain if multichain.is_file() else multichain / MULTICHAIN_FILE
        r = _header_ratio(header.config, ratio)
        posteriors = neff_per_sample(entries, read_multichain(source), tokenizer, r, k, tau, eps)
        if not posteriors:
            raise InvalidArgumentError("--trace", "no latent samples match the multi-chain set")
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            data = {key: value.model_dump() for key, value in posteriors.items()}
            out.write_text(json.dumps(data, indent=2), encoding="utf-8")
        summary = summarize_neff(list(posteriors.values()), min(k, tokenizer.vocab_size), tau)
        console.print_json(summary.model_dump_json())


def _prelim(
    checkpoint: Path,
    corpus: Path,
    out: Path | None,
    seed: int,
    config: Path | None,
    sets: list[str] | None,
    debug: bool,
) -> None:
    with reporting(debug):
        resolved = resolve_checkpoint(checkpoint)
        settings = resolve_settings(config, sets, base=run_snapshot(resolved))
        target = out or settings.output_root / "prelim"
        source = corpus if corpus.is_file() else corpus / TEST_FILE
        report = run_prelim(settings, resolved, source, target, seed)
        console.print_json(
            report.model_dump_json(exclude={"embedding_spectrum", "hidden_spectrum"})
        )


CheckpointOption = Annotated[
    Path, typer.Option("--checkpoint", help="Run or checkpoint directory.")
]
CorpusOption = Annotated[
    Path, typer.Option("--corpus", help="JSONL problems, or a corpus directory (uses test split).")
]
SeedOption = Annotated[int, typer.Option("--seed", help="Sampling seed.")]


@analyze.command("prelim")
def analyze_prelim(
    checkpoint: CheckpointOption,
    corpus: CorpusOption,
    out: OutOption = None,
    seed: SeedOption = 0,
    config: ConfigOption = None,
    sets: SetOption = None,
    debug: DebugOption = False,
) -> None:
    """Hidden states versus token embeddings: FID, MMD², cosine, spectra, 2-D scatter."""
    _prelim(checkpoint, corpus, out, seed, config, sets, debug)


@prelim.callback(invoke_without_command=True)
def prelim_command(
    checkpoint: CheckpointOption,
    corpus: CorpusOption,
    out: OutOption = None,
    seed: SeedOption = 0,
    config: ConfigOption = None,
    sets: SetOption = None,
    debug: DebugOption = False,
) -> None:
    """Same as ``analyze prelim``."""
    _prelim(checkpoint, corpus, out, seed, config, sets, debug)
