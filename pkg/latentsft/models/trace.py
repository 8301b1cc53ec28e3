"""Reasoning traces recorded during generation."""

from __future__ import annotations

from typing import Literal, TypeAlias

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Self

from latentsft.models.types import ReasoningMode, StepMode  # noqa: TC001

Feedback: TypeAlias = Literal["soft_embedding", "hidden_state", "token"]
"""What was fed back into the model after a step."""

_TOLERANCE = 1e-6


class TopKProbs(BaseModel):
    """Sparse storage of a probability vector: the top entries plus residual mass."""

    model_config = ConfigDict(frozen=True)

    ids: list[int]
    ps: list[float]
    residual: float = Field(..., ge=0.0, le=1.0 + _TOLERANCE)

    @model_validator(mode="after")
    def _validate_mass(self) -> Self:
        if len(self.ids) != len(self.ps) or not self.ids:
            msg = "ids and ps must be non-empty and of equal length"
            raise ValueError(msg)
        if any(p < 0.0 for p in self.ps):
            msg = "probabilities must be non-negative"
            raise ValueError(msg)
        if abs(sum(self.ps) + self.residual - 1.0) > _TOLERANCE:
            msg = "top-k mass plus residual must equal 1"
            raise ValueError(msg)
        return self


class StepRecord(BaseModel):
    """One generation step.

    Exactly one of ``probs`` (full vector) or ``topk`` is stored.
    """

    model_config = ConfigDict(frozen=True)

    step: int = Field(..., ge=0)
    mode: StepMode
    probs: list[float] | None = None
    topk: TopKProbs | None = None
    token: int | None = Field(None, description="Emitted token of explicit steps.")
    feedback: Feedback

    @model_validator(mode="after")
    def _validate_storage(self) -> Self:
        if (self.probs is None) == (self.topk is None):
            msg = "exactly one of probs or topk must be stored"
            raise ValueError(msg)
        if self.probs is not None:
            total = float(np.sum(self.probs))
            if min(self.probs) < 0.0 or abs(total - 1.0) > _TOLERANCE:
                msg = f"probs are not on the simplex (sum={total})"
                raise ValueError(msg)
        if self.mode == "explicit" and self.token is None:
            msg = "explicit steps record their token"
            raise ValueError(msg)
        return self

    def dense(self, vocab_size: int) -> np.ndarray:
        """The stored distribution as a length-V float64 array.

        Top-k records leave the residual mass unassigned.
        """
        out = np.zeros(vocab_size, dtype=np.float64)
        if self.probs is not None:
            out[: len(self.probs)] = self.probs
        elif self.topk is not None:
            out[self.topk.ids] = self.topk.ps
        return out


class ReasoningTrace(BaseModel):
    """Full record of one generation."""

    model_config = ConfigDict(frozen=True)

    mode: ReasoningMode
    steps: list[StepRecord] = Field(default_factory=list)
    answer_tokens: list[int] = Field(default_factory=list)
    answer_text: str = ""
    latent_length: int = Field(0, ge=0)
    explicit_length: int = Field(0, ge=0, description="Tokens sampled in explicit mode.")
    chain_length: int = Field(0, ge=0, description="Explicit chain tokens before </think>.")
    truncated: bool = False

    @model_validator(mode="after")
    def _validate_order(self) -> Self:
        modes = [record.mode for record in self.steps]
        if "explicit" in modes and "latent" in modes[modes.index("explicit") :]:
            msg = "latent steps must precede explicit steps"
            raise ValueError(msg)
        if modes.count("latent") != self.latent_length:
            msg = "latent_length does not match the recorded latent steps"
            raise ValueError(msg)
        return self

    @property
    def reasoning_length(self) -> int:
        """#L: latent steps, or chain tokens for explicit reasoning."""
        return self.latent_length if self.mode == "latent" else self.chain_length

    def latent_probs(self, vocab_size: int) -> np.ndarray:
        """``(T, V)`` matrix of latent-step distributions."""
        rows = [r.dense(vocab_size) for r in self.steps if r.mode == "latent"]
        if not rows:
            return np.zeros((0, vocab_size), dtype=np.float64)
        return np.stack(rows)


class TraceHeader(BaseModel):
    """First line of a trace file."""

    kind: Literal["header"] = "header"
    version: str
    checkpoint_hash: str
    config: dict[str, object]


class SampleRecord(BaseModel):
    """Per-sample line of a trace file; its steps follow as separate lines."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["sample"] = "sample"
    id: str
    question: str
    reference: str
    prediction: str
    correct: bool
    latent_length: int = Field(..., ge=0)
    explicit_length: int = Field(..., ge=0)
    truncated: bool = False
    mode: ReasoningMode = "latent"
    seed: int = 0


class TraceStep(StepRecord):
    """Step line of a trace file, tagged with its sample id."""

    kind: Literal["step"] = "step"
    sample: str
