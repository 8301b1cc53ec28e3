"""Run configuration.

Settings are layered, highest priority first: explicit arguments (CLI flags
and ``--set`` overrides), ``LATENTSFT_`` environment variables, the config
file (TOML or YAML, picked by suffix), then the defaults below. Learning
rates and step budgets are desk-scale choices of this project.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, ClassVar

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
    YamlConfigSettingsSource,
)
from typing_extensions import Self

from latentsft import get_logger
from latentsft.exceptions.errors import DataFileError, InvalidArgumentError
from latentsft.models.types import DType, Preset, ReasoningMode, StopRule
from latentsft.synthdata.tokenizer import DEFAULT_ALPHABET, Tokenizer

log = get_logger(__name__)

_SOURCE_LOCK = threading.Lock()


class ModelConfig(BaseModel):
    """Transformer dimensions."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    vocab_size: int | None = Field(
        None, ge=2, description="Vocabulary size V; derived from the alphabet if unset."
    )
    d_model: int = Field(128, ge=1, description="Model width d.")
    n_layers: int = Field(4, ge=1, description="Number of transformer blocks.")
    n_heads: int = Field(4, ge=1, description="Attention heads per block.")
    d_ff: int | None = Field(None, ge=1, description="Feed-forward width; 4d if unset.")
    context_length: int = Field(160, ge=1, description="Maximum sequence length.")
    init_std: float = Field(0.02, gt=0, description="Gaussian initialization std.")
    norm_eps: float = Field(1e-5, gt=0, description="RMS normalization epsilon.")
    dtype: DType = Field("float32", description="Parameter precision.")

    @model_validator(mode="after")
    def _validate_heads(self) -> Self:
        if self.d_model % self.n_heads != 0:
            msg = f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            raise ValueError(msg)
        return self

    @property
    def ff_width(self) -> int:
        """Resolved feed-forward width."""
        return self.d_ff if self.d_ff is not None else 4 * self.d_model

    @property
    def vocab(self) -> int:
        """Resolved vocabulary size."""
        if self.vocab_size is None:
            msg = "vocab_size is unresolved; build the model through Settings"
            raise InvalidArgumentError("vocab_size", msg)
        return self.vocab_size


class DataConfig(BaseModel):
    """Synthetic corpus generation."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    n_problems: int = Field(2000, ge=1, description="Problems before the split.")
    min_steps: int = Field(2, ge=1, description="Fewest arithmetic steps.")
    max_steps: int = Field(5, ge=1, description="Most arithmetic steps.")
    value_low: int = Field(1, ge=0, description="Smallest operand.")
    value_high: int = Field(9, ge=0, description="Largest operand.")
    ops: str = Field("+*", min_length=1, description="Operators to draw from.")
    seed: int = Field(7, ge=0, description="Corpus seed.")
    test_fraction: float = Field(0.1, gt=0, lt=1, description="Held-out share.")
    alphabet: str = Field(DEFAULT_ALPHABET, description="Tokenizer alphabet.")
    multichain: bool = Field(True, description="Also build the multi-chain test set.")
    n_multichain: int = Field(200, ge=0, description="Sum problems to try.")
    max_chains: int = Field(4, ge=2, description="Chains kept per multi-chain problem.")
    similarity_threshold: float = Field(
        0.9, gt=0, le=1, description="Pairwise edit-similarity ceiling."
    )

    @model_validator(mode="after")
    def _validate_ranges(self) -> Self:
        if self.min_steps > self.max_steps:
            msg = f"min_steps={self.min_steps} exceeds max_steps={self.max_steps}"
            raise ValueError(msg)
        if self.value_low > self.value_high:
            msg = f"value_low={self.value_low} exceeds value_high={self.value_high}"
            raise ValueError(msg)
        unknown = set(self.ops) - set("+-*")
        if unknown:
            msg = f"unsupported operators: {''.join(sorted(unknown))}"
            raise ValueError(msg)
        return self


class TrainConfig(BaseModel):
    """Optimization settings for the three training stages."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True, populate_by_name=True)

    ratio: int = Field(2, ge=1, description="Compression ratio r.")
    lam: float = Field(1.0, ge=0, alias="lambda", description="KL weight on latent slots.")
    beta: float = Field(1.0, ge=0, description="CE weight on explicit slots.")
    lr_cot: float = Field(3e-3, gt=0, description="CoT-SFT learning rate.")
    lr_stage1: float = Field(1e-3, gt=0, description="Stage-1 learning rate.")
    lr_stage2: float = Field(5e-4, gt=0, description="Stage-2 learning rate.")
    weight_decay: float = Field(0.01, ge=0, description="Decoupled weight decay.")
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.98, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    grad_clip: float | None = Field(1.0, gt=0, description="Global-norm clip.")
    batch_size: int = Field(32, ge=1, description="Examples per step.")
    stage1_batch_size: int = Field(8, ge=1, description="Examples per stage-1 step.")
    steps_cot: int = Field(3000, ge=0)
    steps_phase_a: int = Field(400, ge=0, description="Encoder-only steps.")
    steps_phase_b: int = Field(400, ge=0, description="Decoder-only steps.")
    steps_phase_c: int = Field(800, ge=0, description="Joint steps.")
    steps_stage2: int = Field(2500, ge=0)
    seed: int = Field(0, description="Initialization and sampling seed.")
    temperature: float = Field(1.0, gt=0, description="Soft-embedding temperature T.")
    top_k: int | None = Field(None, ge=1, description="Prune alpha to top-k.")
    label_top_k: int | None = Field(None, ge=1, description="Prune stage-2 labels.")
    distill_temperature: float = Field(1.0, gt=0, description="Stage-2 KL temperature.")
    hidden_state: bool = Field(False, description="Feed back h instead of E alpha.")
    no_ltim: bool = Field(False, description="Causal encoder mask (ablation).")
    no_ltsum: bool = Field(False, description="Answer-only causal decoding (ablation).")
    freeze_embeddings: bool = Field(True, description="Freeze E in stages 1-2.")
    checkpoint_every: int = Field(500, ge=1)
    log_every: int = Field(50, ge=1)

    @property
    def stage1_steps(self) -> int:
        """Total EM budget."""
        return self.steps_phase_a + self.steps_phase_b + self.steps_phase_c


class DecodeConfig(BaseModel):
    """Generation and evaluation settings."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    reasoning: ReasoningMode = Field("latent", description="Latent or explicit chain.")
    latent_budget: int = Field(64, ge=1, description="Latent step budget T_max.")
    stop_rule: StopRule = Field("argmax", description="Latent termination rule.")
    stop_threshold: float = Field(0.5, gt=0, le=1, description="Threshold rule theta.")
    temperature: float = Field(0.6, gt=0, description="Explicit sampling temperature.")
    top_p: float = Field(0.95, gt=0, le=1, description="Nucleus threshold.")
    greedy: bool = Field(False, description="Argmax explicit decoding.")
    max_explicit_tokens: int = Field(96, ge=1, description="Explicit length cap.")
    seed: int = Field(0, description="Sampling seed.")
    eval_seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    trace_top_k: int | None = Field(
        None, ge=1, description="Store top-k probabilities instead of full vectors."
    )


class Settings(BaseSettings):
    """Resolved configuration of a run."""

    model_config = SettingsConfigDict(
        title="latentsft settings",
        env_prefix="LATENTSFT_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="forbid",
        populate_by_name=True,
    )

    config_file: ClassVar[Path | None] = None

    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    decode: DecodeConfig = Field(default_factory=DecodeConfig)
    output_root: Path = Field(Path("runs"), description="Default output root.")
    threads: int = Field(1, ge=1, description="Worker threads; 1 is bitwise reproducible.")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,  # noqa: ARG003
        file_secret_settings: PydanticBaseSettingsSource,  # noqa: ARG003
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Arguments, then environment, then the selected config file.

        Returns:
            tuple[PydanticBaseSettingsSource, ...]: Sources in priority order.
        """
        sources: list[PydanticBaseSettingsSource] = [init_settings, env_settings]
        path = cls.config_file
        if path is not None:
            if path.suffix in {".yaml", ".yml"}:
                sources.append(YamlConfigSettingsSource(settings_cls, yaml_file=path))
            else:
                sources.append(TomlConfigSettingsSource(settings_cls, toml_file=path))
        return tuple(sources)

    @model_validator(mode="after")
    def _resolve_vocab(self) -> Self:
        vocab = Tokenizer(self.data.alphabet).vocab_size
        if self.model.vocab_size is None:
            self.model.vocab_size = vocab
        elif self.model.vocab_size != vocab:
            msg = f"model.vocab_size={self.model.vocab_size} but the alphabet gives {vocab}"
            raise ValueError(msg)
        return self

    @classmethod
    def load(
        cls,
        path: Path | None = None,
        overrides: dict[str, Any] | None = None,
    ) -> Settings:
        """Build settings from a config file plus explicit overrides.

        Args:
            path (Path | None): TOML or YAML file.
            overrides (dict[str, Any] | None): Nested values that win over
                every other source.

        Raises:
            DataFileError: If ``path`` does not exist.
            InvalidArgumentError: If the merged values fail validation.

        Returns:
            Settings: The resolved configuration.
        """
        if path is not None and not path.exists():
            raise DataFileError(path)
        with _SOURCE_LOCK:
            cls.config_file = path
            try:
                return cls(**(overrides or {}))
            except ValidationError as error:
                raise InvalidArgumentError("config", str(error)) from error
            finally:
                cls.config_file = None

    def snapshot(self, destination: Path) -> Path:
        """Write the resolved configuration as JSON.

        Args:
            destination (Path): Directory receiving ``config.json``.

        Returns:
            Path: The written file.
        """
        destination.mkdir(parents=True, exist_ok=True)
        target = destination / "config.json"
        data = self.model_dump(mode="json", by_alias=True)
        target.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
        log.debug("Config snapshot written to %s", target)
        return target

    @classmethod
    def from_snapshot(cls, source: Path) -> Settings:
        """Rebuild settings from a ``config.json`` snapshot or a directory holding one."""
        target = source / "config.json" if source.is_dir() else source
        if not target.exists():
            raise DataFileError(target)
        return cls.load(overrides=json.loads(target.read_text(encoding="utf-8")))

    def save_yaml(self, destination: Path) -> None:
        """Write the configuration in the YAML config-file format."""
        data = self.model_dump(mode="json", by_alias=True, exclude_none=True)
        with destination.open(mode="w", encoding="utf-8") as f:
            yaml.dump(data, f, default_flow_style=False, sort_keys=True, indent=2)


def parse_overrides(assignments: list[str] | None) -> dict[str, Any]:
    """Turn ``section.field=value`` strings into a nested dict.

    Values are parsed as YAML scalars, so ``4``, ``true`` and ``0.5`` keep
    their types.

    Raises:
        InvalidArgumentError: If an assignment lacks ``=``.
    """
    result: dict[str, Any] = {}
    for assignment in assignments or []:
        key, sep, raw = assignment.partition("=")
        if not sep or not key:
            raise InvalidArgumentError("--set", f"expected key=value, got {assignment!r}")
        node = result
        *parents, leaf = key.strip().split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = yaml.safe_load(raw)
    return result


def merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    """Recursive dict merge; ``extra`` wins."""
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def preset(name: Preset) -> dict[str, Any]:
    """Override dict of a named preset.

    ``desk`` matches the acceptance-scale setup (2 000 problems of 2-5 steps,
    4 layers, d=128). ``smoke`` runs the whole pipeline in seconds.
    """
    if name == "desk":
        return {
            "data": {"n_problems": 2000, "min_steps": 2, "max_steps": 5},
            "model": {"d_model": 128, "n_layers": 4, "n_heads": 4},
        }
    return {
        "data": {"n_problems": 40, "min_steps": 2, "max_steps": 3, "n_multichain": 12},
        "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "context_length": 96},
        "train": {
            "batch_size": 4,
            "stage1_batch_size": 2,
            "steps_cot": 4,
            "steps_phase_a": 2,
            "steps_phase_b": 2,
            "steps_phase_c": 2,
            "steps_stage2": 4,
            "checkpoint_every": 2,
            "log_every": 2,
        },
        "decode": {"latent_budget": 8, "max_explicit_tokens": 16, "eval_seeds": [0, 1]},
    }
