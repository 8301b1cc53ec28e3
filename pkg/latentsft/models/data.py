"""Dataset records.

Field order of ``Problem`` is the on-disk JSONL field order.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Self


class Problem(BaseModel):
    """An arithmetic problem with its explicit reasoning chain."""

    model_config = ConfigDict(frozen=True)

    id: str = Field(..., description="Stable identifier.", examples=["p17"])
    question: str = Field(..., min_length=1, examples=["3+4*2+5"])
    chain: str = Field(
        ...,
        min_length=1,
        description="';'-separated equalities.",
        examples=["3+4=7;7*2=14;14+5=19"],
    )
    answer: str = Field(..., min_length=1, examples=["19"])
    alt_chains: list[str] | None = Field(
        None, description="Alternative chains reaching the same answer."
    )
    seed: int = Field(..., description="Generator seed.")

    @property
    def steps(self) -> list[str]:
        """Chain equalities in order."""
        return self.chain.split(";")


class MultiChainProblem(BaseModel):
    """A problem together with distinct, verified reasoning chains.

    The problem's own chain is always the first entry of ``chains``.
    """

    model_config = ConfigDict(frozen=True)

    problem: Problem
    chains: list[str] = Field(..., min_length=1)
    excluded: bool = Field(False, description="Fewer than two chains survived.")

    @model_validator(mode="after")
    def _validate_chains(self) -> Self:
        if self.chains[0] != self.problem.chain:
            msg = "the first chain must be the problem's own chain"
            raise ValueError(msg)
        if len(set(self.chains)) != len(self.chains):
            msg = "chains must be distinct"
            raise ValueError(msg)
        if self.excluded != (len(self.chains) < 2):
            msg = "excluded must be set exactly when fewer than two chains exist"
            raise ValueError(msg)
        return self

    def to_record(self) -> Problem:
        """The JSONL form: the problem with ``alt_chains`` filled in."""
        return self.problem.model_copy(update={"alt_chains": self.chains[1:]})


class SplitManifest(BaseModel):
    """Summary of a generated corpus, printed and saved by ``gen-data``."""

    seed: int
    alphabet: str
    vocab_size: int
    train: int = Field(..., ge=0)
    test: int = Field(..., ge=0)
    multichain: int = Field(0, ge=0, description="Multi-chain problems kept.")
    multichain_excluded: int = Field(0, ge=0, description="Problems with one chain.")
    duplicates_dropped: int = Field(0, ge=0)
    mean_chain_tokens: float = Field(..., ge=0)
    files: dict[str, str] = Field(default_factory=dict)
