"""Tests for latentsft.pipeline."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import pytest

from latentsft.exceptions.errors import DataFileError
from latentsft.models.config import Settings, preset
from latentsft.models.reports import EvalReport, MeanCI
from latentsft.pipeline import desk_training_criterion, resolve_checkpoint, run_prelim
from latentsft.synthdata.corpus import build_corpus, save_corpus
from latentsft.transformer.checkpoint import save_checkpoint
from latentsft.transformer.params import init_params

if TYPE_CHECKING:
    from pathlib import Path

    from latentsft.models.types import ReasoningMode


def report(mode: ReasoningMode, accuracy: float, length: float) -> EvalReport:
    """Evaluation report with single-run statistics."""

    def stat(value: float) -> MeanCI:
        return MeanCI(mean=value, half_width=0.0, runs=1, values=[value])

    return EvalReport(
        mode=mode,
        samples=10,
        accuracy=stat(accuracy),
        latent_length=stat(length),
        answer_length=stat(2.0),
        efficiency=accuracy / max(length, 1.0),
    )


@pytest.fixture
def smoke() -> Settings:
    """Smoke preset."""
    return Settings.load(overrides=preset("smoke"))


class TestDeskCriterion:
    """Accuracy and length check of the desk-scale run."""

    @pytest.mark.parametrize(
        ("cot", "latent", "passed"),
        [
            ((1.0, 20.0), (0.97, 6.0), True),
            ((0.9, 20.0), (0.9, 6.0), False),
            ((1.0, 20.0), (0.9, 6.0), False),
            ((1.0, 20.0), (1.0, 12.5), False),
        ],
    )
    def test_thresholds(
        self, cot: tuple[float, float], latent: tuple[float, float], passed: bool
    ) -> None:
        """CoT >= 0.95, latent within five points and #L <= 0.6 of the chain."""
        result = desk_training_criterion(report("explicit", *cot), report("latent", *latent))
        assert result.passed is passed

    def test_chain_length_is_the_evaluated_baseline(self) -> None:
        """The reference length is the explicit #L on the evaluated split."""
        result = desk_training_criterion(report("explicit", 1.0, 10.0), report("latent", 1.0, 6.0))
        assert result.passed
        assert result.detail["chain_length"] == 10.0
        shorter = desk_training_criterion(report("explicit", 1.0, 9.0), report("latent", 1.0, 6.0))
        assert not shorter.passed


class TestCheckpoints:
    """Checkpoint resolution."""

    def test_direct_and_run_directories(self, tmp_path: Path, smoke: Settings) -> None:
        """A checkpoint directory resolves to itself, a run to its final model."""
        params = init_params(smoke.model, 0)
        direct = save_checkpoint(tmp_path / "ckpt", params, 0)
        final = save_checkpoint(tmp_path / "run" / "final" / "model", params, 0)
        assert resolve_checkpoint(direct) == direct
        assert resolve_checkpoint(tmp_path / "run") == final

    def test_missing(self, tmp_path: Path) -> None:
        """Directories without a checkpoint raise."""
        with pytest.raises(DataFileError):
            resolve_checkpoint(tmp_path)


class TestPrelim:
    """Hidden-state report files."""

    def test_writes_snapshot_and_report(self, tmp_path: Path, smoke: Settings) -> None:
        """The output directory holds config.json, the report and the scatter."""
        data, out = tmp_path / "data", tmp_path / "prelim"
        save_corpus(build_corpus(smoke.data), data, smoke.data)
        checkpoint = save_checkpoint(tmp_path / "ckpt", init_params(smoke.model, 0), 0)
        result = run_prelim(smoke, checkpoint, data / "test.jsonl", out)
        assert result.rank_limit == smoke.model.d_model
        assert Settings.from_snapshot(out).model.d_model == smoke.model.d_model
        assert json.loads((out / "prelim.json").read_text())["rank_limit"] == result.rank_limit
        assert (out / "scatter.csv").exists()
