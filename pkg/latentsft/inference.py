"""Generation with latent reasoning, batch evaluation and trace files.

In latent mode the model never samples while it reasons: every step feeds back
the expectation ``z = E q_t`` of its own next-token distribution until the stop
rule sees ``</think>``. The answer that follows is decoded explicitly with
temperature and nucleus sampling (or greedily).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from pydantic import ValidationError
from scipy import stats

from latentsft import get_logger
from latentsft.exceptions.errors import CapacityError, DataFileError, InvalidArgumentError
from latentsft.helpers.distributed import ordered_map
from latentsft.models.reports import EvalReport, MeanCI
from latentsft.models.trace import (
    ReasoningTrace,
    SampleRecord,
    StepRecord,
    TopKProbs,
    TraceHeader,
    TraceStep,
)
from latentsft.numerics.probability import (
    ProbVector,
    as_probs,
    prune_top_k,
    softmax_with_temperature,
    top_k_indices,
)
from latentsft.transformer.forward import DenseVector, SequenceInput, TokenId

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    from latentsft.models.config import DecodeConfig, TrainConfig
    from latentsft.models.data import Problem
    from latentsft.models.trace import Feedback
    from latentsft.models.types import StepMode
    from latentsft.synthdata.tokenizer import Tokenizer
    from latentsft.transformer.forward import Transformer

log = get_logger(__name__)


def stop_rule(q: ProbVector | ArrayLike, config: DecodeConfig, think_close_id: int) -> bool:
    """Whether latent reasoning ends at a step with distribution ``q``.

    The ``argmax`` rule fires when ``</think>`` is the most probable token
    (ties go to the lower id); ``threshold`` fires when its mass exceeds
    ``config.stop_threshold``.
    """
    probs = as_probs(q)
    if config.stop_rule == "threshold":
        return bool(probs[think_close_id] > config.stop_threshold)
    return int(np.argmax(probs)) == think_close_id


def nucleus_filter(probs: ArrayLike, top_p: float) -> NDArray[np.float64]:
    """Keep the smallest most-probable set with mass at least ``top_p`` and renormalize.

    The most probable token always survives.
    """
    arr = np.asarray(probs, dtype=np.float64)
    if not 0.0 < top_p <= 1.0:
        raise InvalidArgumentError("top_p", f"{top_p} outside (0, 1]")
    order = np.argsort(-arr, kind="stable")
    cumulative = np.cumsum(arr[order])
    keep = (cumulative - arr[order]) < top_p
    keep[0] = True
    filtered = np.zeros_like(arr)
    filtered[order[keep]] = arr[order[keep]]
    return filtered / filtered.sum()


def sample_token(
    logits: ArrayLike, config: DecodeConfig, rng: np.random.Generator
) -> tuple[int, ProbVector]:
    """Draw one explicit token.

    Returns:
        tuple[int, ProbVector]: The token and the distribution it was drawn
        from (the untempered softmax when decoding greedily).
    """
    if config.greedy:
        probs = softmax_with_temperature(logits)
        return probs.argmax(), probs
    tempered = softmax_with_temperature(logits, config.temperature)
    probs = ProbVector(nucleus_filter(tempered.probs, config.top_p))
    return int(rng.choice(probs.probs.size, p=probs.probs)), probs


def _record(
    step: int,
    mode: StepMode,
    probs: NDArray[np.float64],
    feedback: Feedback,
    token: int | None,
    top_k: int | None,
) -> StepRecord:
    if top_k is None or top_k >= probs.size:
        return StepRecord(
            step=step, mode=mode, probs=probs.tolist(), token=token, feedback=feedback
        )
    ids = top_k_indices(probs, top_k)
    kept = probs[ids]
    residual = min(max(1.0 - float(kept.sum()), 0.0), 1.0)
    stored = TopKProbs(ids=ids.tolist(), ps=kept.tolist(), residual=residual)
    return StepRecord(step=step, mode=mode, topk=stored, token=token, feedback=feedback)


@dataclass
class _Decoder:
    model: Transformer
    config: DecodeConfig
    tokenizer: Tokenizer
    rng: np.random.Generator
    sequence: SequenceInput
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def room(self) -> bool:
        return len(self.sequence) < self.model.context_length

    def push(self, entry: TokenId | DenseVector) -> None:
        self.sequence = self.sequence + SequenceInput((entry,))

    def explicit(self, stop: int, limit: int) -> tuple[list[int], bool]:
        """Sample until ``stop`` or ``limit`` tokens; returns tokens without ``stop``."""
        tokens: list[int] = []
        while len(tokens) < limit and self.room:
            _, logits = self.model.last(self.sequence)
            token, probs = sample_token(logits, self.config, self.rng)
            self.steps.append(
                _record(
                    len(self.steps),
                    "explicit",
                    probs.probs,
                    "token",
                    token,
                    self.config.trace_top_k,
                )
            )
            self.push(TokenId(token))
            if token == stop:
                return tokens, False
            tokens.append(token)
        return tokens, True


def generate(
    model: Transformer,
    question: Sequence[int],
    config: DecodeConfig,
    tokenizer: Tokenizer,
    train: TrainConfig | None = None,
    seed: int | None = None,
) -> ReasoningTrace:
    """Reason about ``question`` and decode its answer.

    Args:
        model (Transformer): Model to decode with.
        question (Sequence[int]): Question token ids.
        config (DecodeConfig): Reasoning mode, stop rule, budget and sampling.
        tokenizer (Tokenizer): Supplies the special token ids.
        train (TrainConfig | None): Latent temperature, ``top_k`` and
            ``hidden_state`` used in training; defaults reproduce plain
            soft embeddings.
        seed (int | None): Sampling seed, defaults to ``config.seed``.

    Raises:
        InvalidArgumentError: If ``question`` is empty.
        CapacityError: If the question does not fit the context.

    Returns:
        ReasoningTrace: Step records, answer and lengths.
    """
    if not question:
        raise InvalidArgumentError("question", "must be non-empty")
    temperature = train.temperature if train is not None else 1.0
    top_k = train.top_k if train is not None else None
    hidden_state = train.hidden_state if train is not None else False
    close, eos = tokenizer.think_close_id, tokenizer.eos_id

    decoder = _Decoder(
        model=model,
        config=config,
        tokenizer=tokenizer,
        rng=np.random.default_rng(config.seed if seed is None else seed),
        sequence=SequenceInput.from_tokens([*question, tokenizer.think_open_id]),
    )
    if len(decoder.sequence) > model.context_length:
        raise CapacityError(len(decoder.sequence), model.context_length)
    latent = 0
    chain: list[int] = []
    truncated = False
    if config.reasoning == "latent":
        feedback = "hidden_state" if hidden_state else "soft_embedding"
        stopped = False
        while latent < config.latent_budget and decoder.room:
            hidden, logits = model.last(decoder.sequence)
            q = prune_top_k(softmax_with_temperature(logits, temperature).probs, top_k)
            if stop_rule(q, config, close):
                stopped = True
                break
            decoder.steps.append(_record(latent, "latent", q, feedback, None, config.trace_top_k))
            z = hidden if hidden_state else model.embedding.astype(np.float64) @ q
            decoder.push(DenseVector.of(z))
            latent += 1
        if not stopped:
            truncated = True
            log.debug("Latent budget exhausted after %d steps, forcing </think>", latent)
        decoder.push(TokenId(close))
    else:
        chain, truncated = decoder.explicit(close, config.max_explicit_tokens)
        if truncated:
            decoder.push(TokenId(close))

    answer, answer_cut = (
        decoder.explicit(eos, config.max_explicit_tokens) if decoder.room else ([], True)
    )
    explicit = sum(1 for record in decoder.steps if record.mode == "explicit")
    return ReasoningTrace(
        mode=config.reasoning,
        steps=decoder.steps,
        answer_tokens=answer,
        answer_text=tokenizer.detokenize(answer),
        latent_length=latent,
        explicit_length=explicit,
        chain_length=len(chain),
        truncated=truncated or answer_cut,
    )


def normalize_answer(text: str) -> str:
    """Comparison form of an answer string."""
    return "".join(text.split()).lstrip("+")


@dataclass
class EvalResult:
    """Aggregate report plus every sample of every seed."""

    report: EvalReport
    samples: list[tuple[SampleRecord, ReasoningTrace]] = field(default_factory=list)


def mean_ci(values: Sequence[float], confidence: float = 0.95) -> MeanCI:
    """Mean and Student-t confidence half-width over repeated runs."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidArgumentError("values", "must be non-empty")
    half = 0.0
    if arr.size > 1:
        sem = float(arr.std(ddof=1)) / np.sqrt(arr.size)
        half = float(stats.t.ppf(0.5 + confidence / 2.0, arr.size - 1)) * sem
    return MeanCI(mean=float(arr.mean()), half_width=half, runs=int(arr.size), values=arr.tolist())


def batch_eval(
    model: Transformer,
    problems: Sequence[Problem],
    config: DecodeConfig,
    tokenizer: Tokenizer,
    train: TrainConfig | None = None,
    threads: int = 1,
) -> EvalResult:
    """Exact-match accuracy and lengths over ``config.eval_seeds``.

    Each problem ``i`` under seed ``s`` samples from a generator seeded by
    ``SeedSequence([s, i])``, so results do not depend on ``threads``.

    Raises:
        InvalidArgumentError: If ``problems`` or ``config.eval_seeds`` is empty.
    """
    if not problems:
        raise InvalidArgumentError("dataset", "must be non-empty")
    seeds = list(config.eval_seeds) or [config.seed]
    samples: list[tuple[SampleRecord, ReasoningTrace]] = []
    accuracy, lengths, answers = [], [], []
    truncated = 0
    for seed in seeds:

        def run(index: int, seed: int = seed) -> tuple[SampleRecord, ReasoningTrace]:
            problem = problems[index]
            trace = generate(
                model,
                tokenizer.tokenize(problem.question),
                config,
                tokenizer,
                train,
                seed=int(np.random.SeedSequence([seed, index]).generate_state(1)[0]),
            )
            record = SampleRecord(
                id=problem.id,
                question=problem.question,
                reference=problem.answer,
                prediction=trace.answer_text,
                correct=normalize_answer(trace.answer_text) == normalize_answer(problem.answer),
                latent_length=trace.reasoning_length,
                explicit_length=trace.explicit_length,
                truncated=trace.truncated,
                mode=trace.mode,
                seed=seed,
            )
            return record, trace

        outputs = ordered_map(run, list(range(len(problems))), threads)
        samples.extend(outputs)
        accuracy.append(float(np.mean([record.correct for record, _ in outputs])))
        lengths.append(float(np.mean([trace.reasoning_length for _, trace in outputs])))
        answers.append(float(np.mean([len(trace.answer_tokens) for _, trace in outputs])))
        truncated += sum(trace.truncated for _, trace in outputs)
        log.info("Seed %d: accuracy %.4f, #L %.2f", seed, accuracy[-1], lengths[-1])

    acc, length = mean_ci(accuracy), mean_ci(lengths)
    report = EvalReport(
        mode=config.reasoning,
        samples=len(problems),
        accuracy=acc,
        latent_length=length,
        answer_length=mean_ci(answers),
        efficiency=acc.mean / max(length.mean, 1.0),
        truncated=truncated,
    )
    return EvalResult(report=report, samples=samples)


# ---------------------------------------------------------------------- #
# Trace files
# ---------------------------------------------------------------------- #
def write_traces(
    path: Path,
    header: TraceHeader,
    samples: Iterable[tuple[SampleRecord, ReasoningTrace]],
) -> int:
    """Write a JSON Lines trace file.

    The header comes first; every sample line is followed by its step lines.
    """
    count = 0
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(header.model_dump_json() + "\n")
        for record, trace in samples:
            f.write(record.model_dump_json() + "\n")
            for step in trace.steps:
                line = TraceStep(sample=record.id, **step.model_dump())
                f.write(line.model_dump_json(exclude_none=True) + "\n")
            count += 1
    return count


@dataclass
class TraceEntry:
    """A sample read back from a trace file."""

    sample: SampleRecord
    steps: list[StepRecord] = field(default_factory=list)

    def latent_probs(self, vocab_size: int) -> NDArray[np.float64]:
        """``(T, V)`` matrix of the latent-step distributions."""
        rows = [step.dense(vocab_size) for step in self.steps if step.mode == "latent"]
        if not rows:
            return np.zeros((0, vocab_size), dtype=np.float64)
        return np.stack(rows)


def read_traces(path: Path) -> tuple[TraceHeader, list[TraceEntry]]:
    """Read a file written by ``write_traces``.

    Raises:
        DataFileError: If the file is missing, has no header or a bad line.
    """
    if not path.exists():
        raise DataFileError(path)
    header: TraceHeader | None = None
    entries: list[TraceEntry] = []
    with path.open(encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                kind = payload.get("kind")
                if header is None:
                    header = TraceHeader.model_validate(payload)
                elif kind == "sample":
                    entries.append(TraceEntry(sample=SampleRecord.model_validate(payload)))
                else:
                    step = TraceStep.model_validate(payload)
                    if not entries or entries[-1].sample.id != step.sample:
                        raise DataFileError(path, f"has a step without its sample on line {number}")
                    record = StepRecord(**step.model_dump(exclude={"kind", "sample"}))
                    entries[-1].steps.append(record)
            except (ValidationError, json.JSONDecodeError) as error:
                reason = f"has an invalid record on line {number}: {error}"
                raise DataFileError(path, reason) from error
    if header is None:
        raise DataFileError(path, "has no header")
    return header, entries


def trace_config(config: DecodeConfig, extra: dict[str, Any] | None = None) -> dict[str, Any]:
    """Decode settings recorded in a trace header."""
    return {**config.model_dump(), **(extra or {})}
