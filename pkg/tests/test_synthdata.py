"""Tests for latentsft.synthdata."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from latentsft.exceptions.errors import DataFileError, InvalidArgumentError
from latentsft.models.config import DataConfig
from latentsft.models.data import MultiChainProblem, Problem
from latentsft.synthdata.corpus import (
    build_corpus,
    read_jsonl,
    read_multichain,
    save_corpus,
    verify,
    write_jsonl,
)
from latentsft.synthdata.generator import (
    evaluate_question,
    execute_chain,
    gen_problem,
    operands,
)
from latentsft.synthdata.multichain import edit_similarity, gen_multichain, levenshtein
from latentsft.synthdata.tokenizer import Tokenizer


def sum_problem(question: str, chain: str, answer: str) -> Problem:
    """A hand-written pure-sum problem."""
    return Problem(id="s", question=question, chain=chain, answer=answer, seed=0)


class TestTokenizer:
    """Character tokenizer."""

    def test_markers_are_single_ids(self) -> None:
        """Marker strings map to one reserved id each."""
        tokenizer = Tokenizer()
        ids = tokenizer.tokenize("1<think>2</think>")
        assert ids == [
            tokenizer.tokenize("1")[0],
            tokenizer.think_open_id,
            tokenizer.tokenize("2")[0],
            tokenizer.think_close_id,
        ]
        assert tokenizer.detokenize(ids) == "1<think>2</think>"

    def test_reserved_ids(self) -> None:
        """Markers occupy the first five ids."""
        tokenizer = Tokenizer("0123")
        assert tokenizer.vocab_size == 9
        assert {tokenizer.pad_id, tokenizer.eos_id, tokenizer.latent_id} <= set(range(5))

    @pytest.mark.parametrize("text", ["1+A", "<bogus>"])
    def test_unknown_symbols(self, text: str) -> None:
        """Characters outside the alphabet and unknown markers are rejected."""
        with pytest.raises(InvalidArgumentError):
            Tokenizer().tokenize(text)

    @pytest.mark.parametrize("alphabet", ["", "aa", "a<"])
    def test_bad_alphabet(self, alphabet: str) -> None:
        """Alphabets must be non-empty, unique and free of '<'."""
        with pytest.raises(InvalidArgumentError):
            Tokenizer(alphabet)

    def test_detokenize_range(self) -> None:
        """Ids outside the vocabulary are rejected."""
        with pytest.raises(InvalidArgumentError):
            Tokenizer().detokenize([999])


class TestGenerator:
    """Arithmetic problem generation."""

    def test_determinism(self) -> None:
        """Same seed, same problem."""
        assert gen_problem(11, 3) == gen_problem(11, 3)

    def test_operands_cover_range(self) -> None:
        """Inclusive operand bounds: both ends are drawn."""
        values = set()
        for seed in range(60):
            values.update(operands(gen_problem(seed, 3, value_range=(1, 3)).question)[0])
        assert values == {1, 2, 3}

    def test_negative_seed(self) -> None:
        """Generator seeds must be non-negative."""
        with pytest.raises(InvalidArgumentError):
            gen_problem(-1, 2)

    @pytest.mark.parametrize("seed", range(20))
    def test_chain_reaches_answer(self, seed: int) -> None:
        """Chains re-execute to the answer and agree with left-to-right evaluation."""
        problem = gen_problem(seed, 4, ops="+-*")
        assert len(problem.steps) == 4
        assert execute_chain(problem.chain) == problem.answer
        assert evaluate_question(problem.question) == problem.answer

    def test_single_step(self) -> None:
        """One operation gives one equality ending in the answer."""
        problem = gen_problem(3, 1)
        assert ";" not in problem.chain
        assert problem.chain.endswith(f"={problem.answer}")

    def test_left_to_right(self) -> None:
        """Questions are evaluated strictly left to right."""
        assert evaluate_question("3+4*2+5") == "19"
        assert execute_chain("3+4=7;7*2=14;14+5=19") == "19"
        assert operands("3+4*2") == ([3, 4, 2], ["+", "*"])

    @pytest.mark.parametrize(
        "chain",
        ["3+4=8", "3+4=7;8*2=16", "3+4"],
    )
    def test_bad_chains(self, chain: str) -> None:
        """Miscomputed, discontinuous and malformed chains are rejected."""
        with pytest.raises(InvalidArgumentError):
            execute_chain(chain)

    @pytest.mark.parametrize(("n_steps", "ops"), [(0, "+"), (2, ""), (2, "/")])
    def test_bad_arguments(self, n_steps: int, ops: str) -> None:
        """n_steps must be positive and ops known."""
        with pytest.raises(InvalidArgumentError):
            gen_problem(1, n_steps, ops=ops)


class TestMultiChain:
    """Alternative summation orders."""

    def test_three_operands(self) -> None:
        """A three-term sum yields three distinct chains with the same answer."""
        problem = sum_problem("2+3+4", "2+3=5;5+4=9", "9")
        result = gen_multichain(problem)
        assert not result.excluded
        assert result.chains == ["2+3=5;5+4=9", "2+4=6;6+3=9", "3+4=7;7+2=9"]
        assert all(execute_chain(chain) == "9" for chain in result.chains)

    def test_two_operands_excluded(self) -> None:
        """A two-term sum has a single chain up to commutation."""
        result = gen_multichain(sum_problem("2+3", "2+3=5", "5"))
        assert result.excluded
        assert result.chains == ["2+3=5"]

    def test_rejects_products(self) -> None:
        """Only pure sums are reorderable."""
        with pytest.raises(InvalidArgumentError):
            gen_multichain(sum_problem("2*3", "2*3=6", "6"))

    def test_cap(self) -> None:
        """At most max_chains chains are kept."""
        problem = sum_problem("1+2+3+4", "1+2=3;3+3=6;6+4=10", "10")
        assert len(gen_multichain(problem, max_chains=2).chains) == 2

    def test_similarity(self) -> None:
        """Edit similarity is one minus normalized Levenshtein distance."""
        assert levenshtein("kitten", "sitting") == 3
        assert edit_similarity("abcd", "abcf") == pytest.approx(0.75)
        assert edit_similarity("", "") == 1.0

    def test_model_validation(self) -> None:
        """The first chain must be the problem's own chain."""
        problem = sum_problem("2+3+4", "2+3=5;5+4=9", "9")
        with pytest.raises(ValidationError):
            MultiChainProblem(problem=problem, chains=["2+4=6;6+3=9", "2+3=5;5+4=9"])


class TestCorpus:
    """Corpus building and JSONL persistence."""

    @pytest.fixture
    def config(self) -> DataConfig:
        """A small corpus."""
        return DataConfig(n_problems=60, n_multichain=20, seed=3, test_fraction=0.2)

    def test_splits_are_disjoint(self, config: DataConfig) -> None:
        """No question appears in both splits."""
        corpus = build_corpus(config)
        train = {p.question for p in corpus.train}
        test = {p.question for p in corpus.test}
        assert not train & test
        assert len(corpus.train) + len(corpus.test) + corpus.duplicates_dropped == 60
        assert all(not m.excluded for m in corpus.multichain)
        assert not {m.problem.question for m in corpus.multichain} & train

    def test_determinism(self, config: DataConfig) -> None:
        """The same configuration rebuilds the same corpus."""
        assert build_corpus(config).train == build_corpus(config).train

    def test_save_and_read(self, tmp_path: Path, config: DataConfig) -> None:
        """Saved splits read back and verify."""
        corpus = build_corpus(config)
        manifest = save_corpus(corpus, tmp_path, config)
        train = read_jsonl(tmp_path / "train.jsonl")
        assert train == corpus.train
        assert verify(train) == len(train)
        assert manifest.train == len(train)
        assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 3
        multichain = read_multichain(tmp_path / "multichain.jsonl")
        assert [m.chains for m in multichain] == [m.chains for m in corpus.multichain]

    def test_missing_file(self, tmp_path: Path) -> None:
        """Missing files are data-file errors."""
        with pytest.raises(DataFileError):
            read_jsonl(tmp_path / "absent.jsonl")

    def test_invalid_record(self, tmp_path: Path) -> None:
        """A bad line names its line number."""
        path = tmp_path / "bad.jsonl"
        write_jsonl(path, [gen_problem(1, 2)])
        with path.open("a", encoding="utf-8") as f:
            f.write('{"id": "x"}\n')
        with pytest.raises(DataFileError, match="line 2"):
            read_jsonl(path)

    def test_bad_ranges(self) -> None:
        """min_steps may not exceed max_steps."""
        with pytest.raises(ValidationError):
            DataConfig(min_steps=4, max_steps=2)
