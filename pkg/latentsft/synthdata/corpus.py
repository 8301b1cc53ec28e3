"""Corpus assembly and JSON Lines I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from pydantic import ValidationError

from latentsft import get_logger
from latentsft.exceptions.errors import DataFileError
from latentsft.models.data import MultiChainProblem, Problem, SplitManifest
from latentsft.synthdata.generator import execute_chain, gen_problem
from latentsft.synthdata.multichain import gen_multichain
from latentsft.synthdata.tokenizer import Tokenizer

if TYPE_CHECKING:
    from collections.abc import Iterable
    from pathlib import Path

    from latentsft.models.config import DataConfig

log = get_logger(__name__)

TRAIN_FILE = "train.jsonl"
TEST_FILE = "test.jsonl"
MULTICHAIN_FILE = "multichain.jsonl"
MANIFEST_FILE = "manifest.json"

# Seed offset of the multi-chain problems, keeping their ids apart from the main split.
_MULTICHAIN_OFFSET = 500_000


@dataclass
class Corpus:
    """Train/test split plus the multi-chain evaluation set."""

    train: list[Problem]
    test: list[Problem]
    multichain: list[MultiChainProblem] = field(default_factory=list)
    multichain_excluded: int = 0
    duplicates_dropped: int = 0


def problem_seed(base: int, index: int) -> int:
    """Seed of the ``index``-th problem of a corpus seeded with ``base``."""
    return base * 1_000_000 + index


def build_corpus(config: DataConfig) -> Corpus:
    """Generate, deduplicate and split a corpus.

    Questions are unique across the whole corpus, so splits are disjoint by
    question string. The multi-chain set holds pure-sum problems whose
    questions do not occur in the training split.

    Args:
        config (DataConfig): Generation settings.

    Returns:
        Corpus: The generated problems.
    """
    rng = np.random.default_rng(config.seed)
    value_range = (config.value_low, config.value_high)
    problems: list[Problem] = []
    questions: set[str] = set()
    duplicates = 0
    for index in range(config.n_problems):
        n_steps = int(rng.integers(config.min_steps, config.max_steps, endpoint=True))
        problem = gen_problem(problem_seed(config.seed, index), n_steps, value_range, config.ops)
        if problem.question in questions:
            duplicates += 1
            continue
        questions.add(problem.question)
        problems.append(problem)
    rng.shuffle(problems)
    n_test = max(1, round(len(problems) * config.test_fraction))
    corpus = Corpus(train=problems[n_test:], test=problems[:n_test], duplicates_dropped=duplicates)
    if duplicates:
        log.info("Dropped %d duplicate questions", duplicates)

    if config.multichain:
        train_questions = {p.question for p in corpus.train}
        low_steps = max(2, config.min_steps)
        for index in range(config.n_multichain):
            high_steps = max(low_steps, config.max_steps)
            n_steps = int(rng.integers(low_steps, high_steps, endpoint=True))
            seed = problem_seed(config.seed, _MULTICHAIN_OFFSET + index)
            problem = gen_problem(seed, n_steps, value_range, "+")
            if problem.question in train_questions:
                continue
            candidate = gen_multichain(problem, config.max_chains, config.similarity_threshold)
            if candidate.excluded:
                corpus.multichain_excluded += 1
                continue
            corpus.multichain.append(candidate)
        log.info(
            "Multi-chain set: %d kept, %d with a single chain",
            len(corpus.multichain),
            corpus.multichain_excluded,
        )
    return corpus


def verify(problems: Iterable[Problem]) -> int:
    """Number of problems whose chains (and alternatives) re-evaluate to the answer."""
    good = 0
    for problem in problems:
        chains = [problem.chain, *(problem.alt_chains or [])]
        if all(execute_chain(chain) == problem.answer for chain in chains):
            good += 1
    return good


def write_jsonl(path: Path, problems: Iterable[Problem]) -> int:
    """Write one problem per line; ``alt_chains`` is omitted when absent."""
    count = 0
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for problem in problems:
            f.write(problem.model_dump_json(exclude_none=True))
            f.write("\n")
            count += 1
    return count


def read_jsonl(path: Path) -> list[Problem]:
    """Read problems written by ``write_jsonl``.

    Raises:
        DataFileError: If the file is missing or a line does not validate.
    """
    if not path.exists():
        raise DataFileError(path)
    problems = []
    with path.open(encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                problems.append(Problem.model_validate_json(line))
            except ValidationError as error:
                reason = f"has an invalid record on line {number}: {error}"
                raise DataFileError(path, reason) from error
    return problems


def read_multichain(path: Path) -> list[MultiChainProblem]:
    """Multi-chain problems from a JSONL file of problems with ``alt_chains``."""
    return [
        MultiChainProblem(
            problem=problem.model_copy(update={"alt_chains": None}),
            chains=[problem.chain, *(problem.alt_chains or [])],
            excluded=not problem.alt_chains,
        )
        for problem in read_jsonl(path)
    ]


def save_corpus(corpus: Corpus, directory: Path, config: DataConfig) -> SplitManifest:
    """Write all splits and ``manifest.json`` into ``directory``."""
    tokenizer = Tokenizer(config.alphabet)
    files = {
        "train": directory / TRAIN_FILE,
        "test": directory / TEST_FILE,
    }
    write_jsonl(files["train"], corpus.train)
    write_jsonl(files["test"], corpus.test)
    if config.multichain:
        files["multichain"] = directory / MULTICHAIN_FILE
        write_jsonl(files["multichain"], (m.to_record() for m in corpus.multichain))
    everything = corpus.train + corpus.test
    manifest = SplitManifest(
        seed=config.seed,
        alphabet=config.alphabet,
        vocab_size=tokenizer.vocab_size,
        train=len(corpus.train),
        test=len(corpus.test),
        multichain=len(corpus.multichain),
        multichain_excluded=corpus.multichain_excluded,
        duplicates_dropped=corpus.duplicates_dropped,
        mean_chain_tokens=sum(len(tokenizer.tokenize(p.chain)) for p in everything)
        / max(1, len(everything)),
        files={name: path.name for name, path in files.items()},
    )
    (directory / MANIFEST_FILE).write_text(
        json.dumps(manifest.model_dump(mode="json"), indent=2), encoding="utf-8"
    )
    return manifest
