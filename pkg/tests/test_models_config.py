"""Tests for the layered run configuration."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import pytest
from pydantic import ValidationError

from latentsft.exceptions.errors import DataFileError, InvalidArgumentError
from latentsft.models.config import (
    DataConfig,
    ModelConfig,
    Settings,
    TrainConfig,
    merge,
    parse_overrides,
    preset,
)
from latentsft.synthdata.tokenizer import Tokenizer

if TYPE_CHECKING:
    from pathlib import Path


class TestDefaults:
    """Default state."""

    def test_vocab_follows_alphabet(self) -> None:
        """The vocabulary size is resolved from the tokenizer."""
        settings = Settings.load()
        assert settings.model.vocab == Tokenizer().vocab_size
        assert settings.threads == 1
        assert settings.train.ratio == 2

    def test_unresolved_vocab(self) -> None:
        """A bare ModelConfig has no vocabulary yet."""
        with pytest.raises(InvalidArgumentError):
            _ = ModelConfig().vocab

    def test_feed_forward_width(self) -> None:
        """d_ff defaults to 4d."""
        assert ModelConfig(d_model=8, n_heads=2).ff_width == 32
        assert ModelConfig(d_model=8, n_heads=2, d_ff=10).ff_width == 10

    def test_stage1_budget(self) -> None:
        """The EM budget is the sum of the three phases."""
        train = TrainConfig(steps_phase_a=1, steps_phase_b=2, steps_phase_c=3)
        assert train.stage1_steps == 6

    def test_lambda_alias(self) -> None:
        """The KL weight is spelled lambda in files."""
        assert TrainConfig.model_validate({"lambda": 0.5}).lam == 0.5


class TestValidation:
    """Rejected configurations."""

    def test_heads_divide_width(self) -> None:
        """d_model must split evenly over heads."""
        with pytest.raises(ValidationError):
            ModelConfig(d_model=10, n_heads=4)

    @pytest.mark.parametrize(
        "fields",
        [{"value_low": 9, "value_high": 1}, {"ops": "+/"}, {"test_fraction": 1.0}],
    )
    def test_data_ranges(self, fields: dict) -> None:
        """Ranges, operators and fractions are checked."""
        with pytest.raises(ValidationError):
            DataConfig(**fields)

    def test_vocab_mismatch(self) -> None:
        """An explicit vocab_size must agree with the alphabet."""
        with pytest.raises(InvalidArgumentError, match="vocab_size"):
            Settings.load(overrides={"model": {"vocab_size": 10}})

    def test_unknown_key(self) -> None:
        """Extra keys are forbidden."""
        with pytest.raises(InvalidArgumentError):
            Settings.load(overrides={"train": {"ratioo": 3}})


class TestSources:
    """Files, environment and overrides."""

    def test_yaml_file(self, tmp_path: Path) -> None:
        """YAML files are read by suffix."""
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  ratio: 5\nmodel:\n  d_model: 32\n")
        settings = Settings.load(path)
        assert settings.train.ratio == 5
        assert settings.model.d_model == 32

    def test_toml_file(self, tmp_path: Path) -> None:
        """Anything else is read as TOML."""
        path = tmp_path / "run.toml"
        path.write_text("[train]\nratio = 6\n")
        assert Settings.load(path).train.ratio == 6

    def test_missing_file(self, tmp_path: Path) -> None:
        """A missing config file is a data-file error."""
        with pytest.raises(DataFileError) as info:
            Settings.load(tmp_path / "absent.yaml")
        assert info.value.exit_code == 3

    def test_priority(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Overrides beat the environment, which beats the file."""
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  ratio: 5\n  seed: 5\n  beta: 0.5\n")
        monkeypatch.setenv("LATENTSFT_TRAIN__RATIO", "3")
        monkeypatch.setenv("LATENTSFT_TRAIN__SEED", "3")
        settings = Settings.load(path, {"train": {"ratio": 4}})
        assert settings.train.ratio == 4
        assert settings.train.seed == 3
        assert settings.train.beta == 0.5

    def test_file_source_is_reset(self, tmp_path: Path) -> None:
        """A later load without a path ignores the earlier file."""
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  ratio: 5\n")
        Settings.load(path)
        assert Settings.load().train.ratio == 2

    def test_snapshot_round_trip(self, tmp_path: Path) -> None:
        """config.json rebuilds the same settings."""
        settings = Settings.load(overrides=merge(preset("smoke"), {"train": {"lambda": 0.3}}))
        target = settings.snapshot(tmp_path / "run")
        assert json.loads(target.read_text())["train"]["lambda"] == 0.3
        assert Settings.from_snapshot(tmp_path / "run") == settings

    def test_missing_snapshot(self, tmp_path: Path) -> None:
        """Directories without config.json are rejected."""
        with pytest.raises(DataFileError):
            Settings.from_snapshot(tmp_path)

    def test_yaml_round_trip(self, tmp_path: Path) -> None:
        """save_yaml writes a loadable config file."""
        settings = Settings.load(overrides=preset("smoke"))
        settings.save_yaml(tmp_path / "smoke.yaml")
        assert Settings.load(tmp_path / "smoke.yaml") == settings


class TestOverrides:
    """--set parsing, merging and presets."""

    def test_parse(self) -> None:
        """Dotted keys nest and values keep their YAML types."""
        parsed = parse_overrides(
            ["train.ratio=4", "train.lambda=0.5", "decode.greedy=true", "output_root=out"]
        )
        assert parsed == {
            "train": {"ratio": 4, "lambda": 0.5},
            "decode": {"greedy": True},
            "output_root": "out",
        }
        assert parse_overrides(None) == {}

    @pytest.mark.parametrize("assignment", ["train.ratio", "=4"])
    def test_parse_invalid(self, assignment: str) -> None:
        """Assignments need a key and an equals sign."""
        with pytest.raises(InvalidArgumentError):
            parse_overrides([assignment])

    def test_merge(self) -> None:
        """Nested dicts merge; the second argument wins."""
        base = {"train": {"ratio": 2, "seed": 1}, "threads": 1}
        merged = merge(base, {"train": {"ratio": 4}, "threads": 2})
        assert merged == {"train": {"ratio": 4, "seed": 1}, "threads": 2}
        assert base["train"]["ratio"] == 2

    @pytest.mark.parametrize(("name", "width"), [("desk", 128), ("smoke", 16)])
    def test_presets(self, name: str, width: int) -> None:
        """Presets validate and set the model width."""
        settings = Settings.load(overrides=preset(name))
        assert settings.model.d_model == width
