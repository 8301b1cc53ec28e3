"""End-to-end recipes shared by the command line.

Each stage reads its inputs from disk and writes a run directory, so stages
can be chained by the CLI one at a time or all at once by ``reproduce``.
"""

from __future__ import annotations

import json
import time
from datetime import timedelta
from typing import TYPE_CHECKING, Any

import humanize
import numpy as np

from latentsft import __version__, get_logger
from latentsft.analysis.alignment import (
    DEFAULT_K,
    ecr_at_k,
    path_posterior,
    summarize_ecr,
    summarize_neff,
)
from latentsft.analysis.prelim import hidden_vs_embedding_report, write_scatter
from latentsft.exceptions.errors import DataFileError, InvalidArgumentError
from latentsft.inference import EvalResult, TraceEntry, batch_eval, trace_config, write_traces
from latentsft.models.config import Settings, merge, preset
from latentsft.models.reports import AcceptanceReport, CriterionResult
from latentsft.models.trace import TraceHeader
from latentsft.synthdata.corpus import (
    MULTICHAIN_FILE,
    TEST_FILE,
    TRAIN_FILE,
    build_corpus,
    read_jsonl,
    read_multichain,
    save_corpus,
)
from latentsft.synthdata.tokenizer import Tokenizer
from latentsft.training.cot import GROUP, train_cot_sft
from latentsft.training.examples import prepare_examples
from latentsft.training.runs import FINAL, RunDirectory
from latentsft.training.stage1 import DECODER, LABELS_FILE, LabelCache, train_stage1
from latentsft.training.stage2 import train_stage2
from latentsft.transformer.checkpoint import MANIFEST, checkpoint_hash, load_params
from latentsft.transformer.forward import Transformer

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from latentsft.models.data import MultiChainProblem, Problem
    from latentsft.models.reports import EcrSummary, EvalReport, NeffSummary, PrelimReport
    from latentsft.models.types import Preset

log = get_logger(__name__)

ACCEPTANCE_FILE = "acceptance.json"
PRELIM_FILE = "prelim.json"
SCATTER_FILE = "scatter.csv"
TRACE_FILE = "traces.jsonl"
REPORT_FILE = "eval.json"
ECR_K = 10
ABLATIONS = ("hidden_state", "no_ltim", "no_ltsum")


# ---------------------------------------------------------------------- #
# Inputs
# ---------------------------------------------------------------------- #
def load_problems(data: Path, name: str = TRAIN_FILE) -> list[Problem]:
    """Problems of ``data/name``; ``data`` may also be the JSONL file itself."""
    return read_jsonl(data if data.is_file() else data / name)


def resolve_checkpoint(path: Path) -> Path:
    """Checkpoint directory behind ``path``.

    Accepts a checkpoint directory or a run directory whose ``final``
    holds a ``model`` (CoT-SFT, stage 2) or ``decoder`` (stage 1) checkpoint.

    Raises:
        DataFileError: If no checkpoint is found.
    """
    if (path / MANIFEST).exists():
        return path
    for group in (GROUP, DECODER):
        candidate = path / FINAL / group
        if (candidate / MANIFEST).exists():
            return candidate
    raise DataFileError(path, "holds no checkpoint")


def run_snapshot(checkpoint: Path) -> dict[str, Any]:
    """Configuration snapshot of the run a checkpoint belongs to, or ``{}``."""
    for parent in (checkpoint, *checkpoint.parents[:4]):
        target = parent / "config.json"
        if target.exists():
            return json.loads(target.read_text(encoding="utf-8"))
    return {}


# ---------------------------------------------------------------------- #
# Stages
# ---------------------------------------------------------------------- #
def run_cot(
    settings: Settings, data: Path, out: Path, resume: bool = False, progress: bool = True
) -> Path:
    """Train the CoT-SFT model; returns its final checkpoint."""
    problems = load_problems(data)
    with RunDirectory(out, "cot") as run:
        run.start(settings)
        train_cot_sft(settings, problems, run=run, resume=resume, progress=progress)
    return out / FINAL / GROUP


def run_stage1(
    settings: Settings,
    data: Path,
    init: Path,
    out: Path,
    resume: bool = False,
    progress: bool = True,
) -> Path:
    """Stage 1 from a CoT-SFT checkpoint; returns the run directory."""
    problems = load_problems(data)
    params = load_params(resolve_checkpoint(init))
    with RunDirectory(out, "stage1") as run:
        run.start(settings)
        train_stage1(settings, problems, params, run=run, resume=resume, progress=progress)
    return out


def run_stage2(
    settings: Settings,
    data: Path,
    stage1: Path,
    out: Path,
    resume: bool = False,
    progress: bool = True,
) -> Path:
    """Stage 2 from a stage-1 run; returns its final checkpoint."""
    problems = load_problems(data)
    labels = LabelCache.load(stage1 / LABELS_FILE)
    decoder = load_params(stage1 / FINAL / DECODER)
    with RunDirectory(out, "stage2") as run:
        run.start(settings)
        train_stage2(settings, problems, labels, decoder, run=run, resume=resume, progress=progress)
    return out / FINAL / GROUP


def run_latent(settings: Settings, data: Path, cot: Path, out: Path, progress: bool = True) -> Path:
    """Both latent stages under ``out/stage1`` and ``out/stage2``."""
    stage1 = run_stage1(settings, data, cot, out / "stage1", progress=progress)
    return run_stage2(settings, data, stage1, out / "stage2", progress=progress)


# ---------------------------------------------------------------------- #
# Evaluation
# ---------------------------------------------------------------------- #
def evaluate(
    settings: Settings,
    checkpoint: Path,
    problems: Sequence[Problem],
    trace_out: Path | None = None,
    report_out: Path | None = None,
) -> EvalResult:
    """Evaluate a checkpoint and optionally write traces and the report."""
    model = Transformer(load_params(checkpoint, trainable=False))
    tokenizer = Tokenizer(settings.data.alphabet)
    result = batch_eval(
        model, problems, settings.decode, tokenizer, settings.train, settings.threads
    )
    if trace_out is not None:
        header = TraceHeader(
            version=__version__,
            checkpoint_hash=checkpoint_hash(checkpoint),
            config=trace_config(
                settings.decode,
                {"alphabet": settings.data.alphabet, "ratio": settings.train.ratio},
            ),
        )
        write_traces(trace_out, header, result.samples)
    if report_out is not None:
        report_out.parent.mkdir(parents=True, exist_ok=True)
        report_out.write_text(result.report.model_dump_json(indent=2), encoding="utf-8")
    return result


def first_seed_entries(result: EvalResult) -> list[TraceEntry]:
    """One entry per problem, taken from the first evaluation seed."""
    seen: set[str] = set()
    entries = []
    for record, trace in result.samples:
        if record.id not in seen:
            seen.add(record.id)
            entries.append(TraceEntry(sample=record, steps=list(trace.steps)))
    return entries


def ecr_per_sample(
    entries: Sequence[TraceEntry],
    problems: Sequence[Problem],
    tokenizer: Tokenizer,
    r: int,
    k: int,
) -> dict[str, float]:
    """ECR@K of every latent sample with at least one latent step."""
    chains = {p.id: tokenizer.tokenize(p.chain) for p in problems}
    values: dict[str, float] = {}
    for entry in entries:
        if entry.sample.id in values or entry.sample.id not in chains:
            continue
        probs = entry.latent_probs(tokenizer.vocab_size)
        if probs.shape[0] == 0:
            log.warning("Sample %s has no latent steps, skipped", entry.sample.id)
            continue
        values[entry.sample.id] = ecr_at_k(probs, chains[entry.sample.id], r, k)
    return values


def neff_per_sample(
    entries: Sequence[TraceEntry],
    problems: Sequence[MultiChainProblem],
    tokenizer: Tokenizer,
    r: int,
    k: int = DEFAULT_K,
    tau: float = 1.0,
    eps: float = 1e-8,
) -> dict[str, Any]:
    """Path posterior of every sample whose problem has at least two chains."""
    by_id = {p.problem.id: p for p in problems if not p.excluded}
    k = min(k, tokenizer.vocab_size)
    posteriors = {}
    for entry in entries:
        problem = by_id.get(entry.sample.id)
        if problem is None or entry.sample.id in posteriors:
            continue
        probs = entry.latent_probs(tokenizer.vocab_size)
        if probs.shape[0] == 0:
            log.warning("Sample %s has no latent steps, skipped", entry.sample.id)
            continue
        chains = [tokenizer.tokenize(chain) for chain in problem.chains]
        posteriors[entry.sample.id] = path_posterior(probs, chains, r, k, tau, eps)
    return posteriors


# ---------------------------------------------------------------------- #
# Reproduction
# ---------------------------------------------------------------------- #
def _criterion(name: str, passed: bool, **detail: float | int | str | None) -> CriterionResult:
    log.info("%s: %s", name, "pass" if passed else "FAIL")
    return CriterionResult(name=name, passed=bool(passed), detail=detail)


def desk_training_criterion(cot: EvalReport, latent: EvalReport) -> CriterionResult:
    """CoT accuracy, latent accuracy within five points and ``#L`` at most 0.6 of the chain.

    The chain length is the explicit baseline's ``#L`` on the same split.
    """
    cot_acc, latent_acc = cot.accuracy.mean, latent.accuracy.mean
    chain = cot.latent_length.mean
    return _criterion(
        "desk_training",
        cot_acc >= 0.95
        and latent_acc >= cot_acc - 0.05
        and latent.latent_length.mean <= 0.6 * chain,
        cot_accuracy=cot_acc,
        latent_accuracy=latent_acc,
        latent_length=latent.latent_length.mean,
        chain_length=chain,
    )


def _variant(settings: Settings, **train: Any) -> Settings:
    base = settings.model_dump(mode="json", by_alias=True)
    return Settings.load(overrides=merge(base, {"train": train}))


def _ecr_summary(
    settings: Settings, checkpoint: Path, problems: Sequence[Problem], r: int
) -> tuple[EvalResult, dict[str, float], EcrSummary]:
    result = evaluate(settings, checkpoint, problems)
    tokenizer = Tokenizer(settings.data.alphabet)
    values = ecr_per_sample(first_seed_entries(result), problems, tokenizer, r, ECR_K)
    return result, values, summarize_ecr(list(values.values()) or [0.0], ECR_K, r)


def reproduce(
    name: Preset,
    out: Path,
    overrides: dict[str, Any] | None = None,
    threads: int = 1,
    progress: bool = True,
) -> AcceptanceReport:
    """Generate data, train every model, evaluate and check criteria 4-8.

    Writes every run under ``out`` and the outcome to ``out/acceptance.json``.
    """
    started = time.monotonic()
    settings = Settings.load(
        overrides=merge(merge(preset(name), overrides or {}), {"threads": threads})
    )
    settings.snapshot(out)
    data = out / "data"
    settings.snapshot(data)
    save_corpus(build_corpus(settings.data), data, settings.data)
    train, test = load_problems(data, TRAIN_FILE), load_problems(data, TEST_FILE)
    if not test:
        raise InvalidArgumentError("data", "the held-out split is empty")
    report = AcceptanceReport(preset=name)

    cot = run_cot(settings, data, out / "cot", progress=progress)
    explicit = _variant(settings)
    explicit.decode.reasoning = "explicit"
    cot_eval = evaluate(explicit, cot, test, report_out=out / "cot" / REPORT_FILE)

    r2 = _variant(settings, ratio=2)
    latent2 = run_latent(r2, data, cot, out / "latent-r2", progress=progress)
    eval2, ecr2, summary2 = _ecr_summary(r2, latent2, test)
    r4 = _variant(settings, ratio=4)
    latent4 = run_latent(r4, data, cot, out / "latent-r4", progress=progress)
    _, ecr4, summary4 = _ecr_summary(r4, latent4, test)

    acc2 = eval2.report.accuracy.mean
    report.criteria.append(desk_training_criterion(cot_eval.report, eval2.report))

    matched = sorted(set(ecr2) & set(ecr4))
    mean2 = float(np.mean([ecr2[i] for i in matched])) if matched else 0.0
    mean4 = float(np.mean([ecr4[i] for i in matched])) if matched else 0.0
    report.criteria.append(
        _criterion(
            "ecr",
            summary2.above_one >= 0.7 and mean4 > mean2,
            above_one_r2=summary2.above_one,
            mean_r2=mean2,
            mean_r4=mean4,
            matched=len(matched),
            mean_r4_all=summary4.mean,
        )
    )

    report.criteria.append(_neff_criterion(r2, latent2, data))

    ablation_detail: dict[str, float | int | str | None] = {"full": acc2}
    passed = True
    for ablation in ABLATIONS:
        variant = _variant(settings, ratio=2, **{ablation: True})
        checkpoint = run_latent(variant, data, cot, out / f"ablation-{ablation}", progress=progress)
        accuracy = evaluate(variant, checkpoint, test).report.accuracy.mean
        ablation_detail[ablation] = accuracy
        slack = 0.01 if ablation == "no_ltsum" else 0.0
        passed = passed and acc2 + slack >= accuracy
    report.criteria.append(_criterion("ablations", passed, **ablation_detail))

    prelim = run_prelim(r2, latent2, data / TEST_FILE, out / "prelim")
    report.criteria.append(
        _criterion(
            "prelim",
            prelim.fid > prelim.fid_self
            and prelim.mmd2 > prelim.mmd2_self
            and prelim.effective_rank_embedding < prelim.rank_limit,
            fid=prelim.fid,
            fid_self=prelim.fid_self,
            mmd2=prelim.mmd2,
            mmd2_self=prelim.mmd2_self,
            effective_rank=prelim.effective_rank_embedding,
            rank_limit=prelim.rank_limit,
        )
    )

    (out / ACCEPTANCE_FILE).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    log.info(
        "Reproduction finished in %s: %d/%d criteria passed",
        humanize.naturaldelta(timedelta(seconds=time.monotonic() - started)),
        sum(c.passed for c in report.criteria),
        len(report.criteria),
    )
    return report


def _neff_criterion(settings: Settings, checkpoint: Path, data: Path) -> CriterionResult:
    multichain = read_multichain(data / MULTICHAIN_FILE)
    usable = [p for p in multichain if not p.excluded]
    if not usable:
        return _criterion("neff", False, reason="no multi-chain problems")
    result = evaluate(settings, checkpoint, [p.problem for p in usable])
    tokenizer = Tokenizer(settings.data.alphabet)
    entries = first_seed_entries(result)
    posteriors = neff_per_sample(entries, usable, tokenizer, settings.train.ratio)
    if not posteriors:
        return _criterion("neff", False, reason="no latent traces")
    k = min(DEFAULT_K, tokenizer.vocab_size)
    summary: NeffSummary = summarize_neff(list(posteriors.values()), k, 1.0)
    return _criterion(
        "neff",
        summary.median_n_eff > summary.threshold and summary.mean_top2 > 0.3,
        median_n_eff=summary.median_n_eff,
        mean_top2=summary.mean_top2,
        samples=summary.samples,
    )


def run_prelim(
    settings: Settings, checkpoint: Path, corpus: Path, out: Path, seed: int = 0
) -> PrelimReport:
    """Hidden-state report plus its 2-D scatter, written to ``out``."""
    settings.snapshot(out)
    params = load_params(resolve_checkpoint(checkpoint), trainable=False)
    tokenizer = Tokenizer(settings.data.alphabet)
    examples = prepare_examples(
        load_problems(corpus), tokenizer, settings.train.ratio, params.config.context_length
    )
    report, hidden, embedding = hidden_vs_embedding_report(params, examples, seed=seed)
    (out / PRELIM_FILE).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    write_scatter(out / SCATTER_FILE, hidden, embedding)
    return report
