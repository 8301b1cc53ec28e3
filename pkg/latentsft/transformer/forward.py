"""Pre-norm decoder-only transformer over mixed token and dense inputs.

Each block applies ``x + Attn(RMSNorm(x))`` then ``x + MLP(RMSNorm(x))``.
Inputs are either token ids, looked up as columns of ``E``, or dense vectors
in embedding space; both then receive the same learned position embedding.
Batches are right-padded with the padding id; a padding row only attends to
itself and no real row ever sees it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, TypeAlias

import numpy as np

from latentsft.exceptions.errors import CapacityError, InvalidArgumentError
from latentsft.numerics import functional as F
from latentsft.numerics.tensor import Tensor, no_grad
from latentsft.synthdata.tokenizer import Tokenizer
from latentsft.transformer.masking import AttentionMask
from latentsft.transformer.params import FINAL_NORM, POSITION, layer_name

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from latentsft.transformer.params import ModelParams

PAD_ID = Tokenizer().pad_id


@dataclass(frozen=True)
class TokenId:
    """A vocabulary id at one position."""

    value: int


@dataclass(frozen=True)
class DenseVector:
    """A length-``d`` vector fed in place of an embedding lookup."""

    vector: Tensor

    @classmethod
    def of(cls, values: Tensor | ArrayLike) -> DenseVector:
        """Wrap arrays as constant tensors; tensors keep their graph."""
        return cls(values if isinstance(values, Tensor) else Tensor(np.asarray(values)))


Entry: TypeAlias = TokenId | DenseVector


@dataclass(frozen=True)
class SequenceInput:
    """Ordered per-position inputs; position ``i`` is the ``i``-th entry."""

    entries: tuple[Entry, ...]

    @classmethod
    def from_tokens(cls, tokens: Sequence[int]) -> SequenceInput:
        """All-token sequence."""
        return cls(tuple(TokenId(int(t)) for t in tokens))

    def __len__(self) -> int:
        return len(self.entries)

    def __add__(self, other: SequenceInput) -> SequenceInput:
        return SequenceInput(self.entries + other.entries)


@dataclass(frozen=True)
class ForwardOutput:
    """Final hidden states and logits.

    Attributes:
        hidden: ``(B, L, d)`` final-norm outputs, or ``(L, d)`` unbatched.
        logits: ``hidden @ E``.
    """

    hidden: Tensor
    logits: Tensor


def _check(params: ModelParams, sequence: SequenceInput, mask: AttentionMask) -> None:
    config = params.config
    if len(sequence) == 0:
        raise InvalidArgumentError("input", "sequence is empty")
    if mask.length != len(sequence):
        raise InvalidArgumentError(
            "mask", f"mask length {mask.length} != input length {len(sequence)}"
        )
    if len(sequence) > config.context_length:
        raise CapacityError(len(sequence), config.context_length)
    for entry in sequence.entries:
        if isinstance(entry, TokenId) and not 0 <= entry.value < config.vocab:
            msg = f"token id {entry.value} outside [0, {config.vocab})"
            raise InvalidArgumentError("input", msg)
        if isinstance(entry, DenseVector) and entry.vector.shape != (config.d_model,):
            raise InvalidArgumentError(
                "input", f"dense vector of shape {entry.vector.shape}, expected ({config.d_model},)"
            )


def _attention(
    params: ModelParams, layer: int, x: Tensor, allow: NDArray[np.bool_]
) -> Tensor:
    batch, length, width = x.shape
    heads = params.config.n_heads
    head_dim = width // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(batch, length, heads, head_dim).transpose(0, 2, 1, 3)

    q = split(x @ params[layer_name(layer, "wq")])
    k = split(x @ params[layer_name(layer, "wk")])
    v = split(x @ params[layer_name(layer, "wv")])
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(head_dim))
    weights = F.masked_softmax(scores, allow[:, None, :, :])
    context = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, length, width)
    return context @ params[layer_name(layer, "wo")]


def forward_batch(
    params: ModelParams,
    inputs: Sequence[SequenceInput],
    masks: Sequence[AttentionMask],
) -> ForwardOutput:
    """Run a right-padded batch.

    Args:
        params (ModelParams): Model parameters.
        inputs (Sequence[SequenceInput]): One sequence per batch row.
        masks (Sequence[AttentionMask]): One mask per sequence, matching its
            length.

    Raises:
        InvalidArgumentError: On mask/input length mismatch, bad token ids or
            dense vector shapes.
        CapacityError: If a sequence exceeds the context length.

    Returns:
        ForwardOutput: ``(B, L_max, ·)`` outputs; rows past a sequence's
        length are padding.
    """
    if len(inputs) != len(masks) or not inputs:
        raise InvalidArgumentError("masks", "need one mask per non-empty batch row")
    for sequence, mask in zip(inputs, masks, strict=True):
        _check(params, sequence, mask)
    config = params.config
    length = max(len(s) for s in inputs)
    ids = np.full((len(inputs), length), PAD_ID, dtype=np.int64)
    dense: list[tuple[int, int, Tensor]] = []
    for row, sequence in enumerate(inputs):
        for position, entry in enumerate(sequence.entries):
            if isinstance(entry, TokenId):
                ids[row, position] = entry.value
            else:
                ids[row, position] = -1
                dense.append((row, position, entry.vector))
    allow = np.stack([mask.padded(length) for mask in masks])

    x = F.embed_sequence(params.embedding, ids, dense) + params[POSITION][:length]
    for layer in range(config.n_layers):
        normed = F.rms_norm(x, params[layer_name(layer, "attn_norm")], config.norm_eps)
        x = x + _attention(params, layer, normed, allow)
        normed = F.rms_norm(x, params[layer_name(layer, "mlp_norm")], config.norm_eps)
        inner = F.gelu(normed @ params[layer_name(layer, "w_in")])
        x = x + inner @ params[layer_name(layer, "w_out")]
    hidden = F.rms_norm(x, params[FINAL_NORM], config.norm_eps)
    return ForwardOutput(hidden=hidden, logits=hidden @ params.head)


def forward(params: ModelParams, sequence: SequenceInput, mask: AttentionMask) -> ForwardOutput:
    """Unbatched forward pass returning ``(L, d)`` hidden states and ``(L, V)`` logits."""
    out = forward_batch(params, [sequence], [mask])
    return ForwardOutput(hidden=out.hidden[0], logits=out.logits[0])


class Transformer:
    """Callable model over a parameter set.

    Generation code only talks to this class, so tests can subclass it and
    override ``last`` with scripted distributions.
    """

    def __init__(self, params: ModelParams) -> None:
        self.params = params

    @property
    def vocab_size(self) -> int:
        """Vocabulary size V."""
        return self.params.config.vocab

    @property
    def d_model(self) -> int:
        """Model width d."""
        return self.params.config.d_model

    @property
    def context_length(self) -> int:
        """Longest accepted sequence."""
        return self.params.config.context_length

    @property
    def embedding(self) -> NDArray:
        """``E`` as a plain ``(d, V)`` array."""
        return self.params.embedding.data

    def __call__(
        self, inputs: Sequence[SequenceInput], masks: Sequence[AttentionMask]
    ) -> ForwardOutput:
        return forward_batch(self.params, inputs, masks)

    def last(
        self, sequence: SequenceInput, mask: AttentionMask | None = None
    ) -> tuple[NDArray, NDArray]:
        """Hidden state and logits at the final position, without recording a graph.

        Args:
            sequence (SequenceInput): Prefix to condition on.
            mask (AttentionMask | None): Defaults to causal.

        Returns:
            tuple[NDArray, NDArray]: Float64 ``(d,)`` hidden state and ``(V,)`` logits.
        """
        with no_grad():
            out = forward(self.params, sequence, mask or AttentionMask.causal(len(sequence)))
        return (
            out.hidden.data[-1].astype(np.float64),
            out.logits.data[-1].astype(np.float64),
        )
