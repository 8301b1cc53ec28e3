"""Evaluation, analysis and acceptance reports."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Self

from latentsft.models.types import ReasoningMode  # noqa: TC001

_TOLERANCE = 1e-9


class PathPosterior(BaseModel):
    """Posterior over candidate chains given one latent trace."""

    model_config = ConfigDict(frozen=True)

    scores: list[float]
    posterior: list[float]
    aligned_steps: list[int] = Field(..., description="T' per chain.")
    n_eff: float = Field(..., ge=1.0 - _TOLERANCE)
    top2: float = Field(..., ge=0.0, le=1.0 + _TOLERANCE)
    step_posterior: list[list[float]] = Field(
        default_factory=list, description="Per latent step posterior over chains."
    )
    step_n_eff: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _validate(self) -> Self:
        if abs(sum(self.posterior) - 1.0) > 1e-6:
            msg = "posterior does not sum to one"
            raise ValueError(msg)
        if self.n_eff > len(self.posterior) + 1e-6:
            msg = "n_eff exceeds the number of chains"
            raise ValueError(msg)
        return self


class MeanCI(BaseModel):
    """Mean and 95% confidence half-width over repeated runs."""

    mean: float
    half_width: float = Field(..., ge=0.0)
    runs: int = Field(..., ge=1)
    values: list[float] = Field(default_factory=list)

    def __str__(self) -> str:
        return f"{self.mean:.4f} ± {self.half_width:.4f}"


class EvalReport(BaseModel):
    """Output of ``batch_eval``."""

    mode: ReasoningMode
    samples: int = Field(..., ge=1)
    accuracy: MeanCI
    latent_length: MeanCI = Field(..., description="#L: latent steps or chain tokens.")
    answer_length: MeanCI
    efficiency: float = Field(..., description="Pass@1 divided by #L.")
    truncated: int = Field(0, ge=0)


class EcrSummary(BaseModel):
    """ECR@K over a set of traces."""

    k: int
    ratio: int
    samples: int
    mean: float
    median: float
    above_one: float = Field(..., description="Share of samples with ECR above 1.")


class NeffSummary(BaseModel):
    """Path-posterior statistics over a multi-chain set."""

    k: int
    tau: float
    samples: int
    median_n_eff: float
    mean_n_eff: float
    mean_top2: float
    threshold: float = 1.7
    above_threshold: float = Field(..., description="Share of samples with N_eff above threshold.")


class DistributionStats(BaseModel):
    """First and second moments of a point cloud."""

    count: int
    mean_norm: float
    mean_variance: float
    mean_of_means: float


class PrelimReport(BaseModel):
    """Hidden states versus token embeddings."""

    fid: float
    mmd2: float
    fid_self: float
    mmd2_self: float
    cosine_cross: float = Field(..., description="Mean cosine of random hidden/embedding pairs.")
    cosine_self: float = Field(..., description="Mean cosine of random embedding pairs.")
    bandwidth: float
    effective_rank_embedding: float
    effective_rank_hidden: float
    rank_limit: int = Field(..., description="min(d, V).")
    embedding_spectrum: list[float]
    hidden_spectrum: list[float]
    hidden: DistributionStats
    embedding: DistributionStats


class CriterionResult(BaseModel):
    """One acceptance check."""

    name: str
    passed: bool
    detail: dict[str, float | int | str | None] = Field(default_factory=dict)


class AcceptanceReport(BaseModel):
    """Written by ``reproduce`` as ``acceptance.json``."""

    preset: str
    criteria: list[CriterionResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Whether every criterion passed."""
        return all(c.passed for c in self.criteria)
