"""Soft embeddings and the two latent training objectives.

A latent token is ``z = E @ alpha`` with ``alpha = softmax(h @ E / T)``, a
convex combination of token embeddings. Stage 1 trains an encoder to emit
such tokens by requiring a decoder to continue the explicit chain from
``z_1..z_i`` alone. Stage 2 distils the encoder's ``alpha`` sequence into the
decoder's own next-token distribution (KL on latent positions, CE on
explicit ones).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.numerics import functional as F
from latentsft.numerics.probability import ProbVector, as_probs, prune_top_k, top_k_indices
from latentsft.numerics.tensor import Tensor, lift
from latentsft.segmask import (
    SegmentedExample,
    SequenceLayout,
    build_ltim,
    build_ltsum,
    decoder_layout,
    encoder_layout,
    mask_ablation_variants,
    stage2_layout,
    suffix_positions,
)
from latentsft.transformer.forward import DenseVector, SequenceInput, TokenId, forward_batch
from latentsft.transformer.masking import AttentionMask

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from latentsft.transformer.params import ModelParams


@dataclass(frozen=True)
class LatentToken:
    """A soft token ``(alpha, z)``.

    ``z`` equals ``E @ alpha`` except under the hidden-state ablation, where
    it is the raw hidden state and ``alpha`` is only recorded.
    """

    alpha: Tensor
    z: Tensor

    @property
    def probs(self) -> ProbVector:
        """``alpha`` as a float64 simplex point."""
        values = self.alpha.data.astype(np.float64)
        return ProbVector(values / values.sum())

    def reconstruction_error(self, embedding: ArrayLike) -> float:
        """``||z - E alpha|| / ||z||``."""
        table = np.asarray(embedding, dtype=np.float64)
        z = self.z.data.astype(np.float64)
        residual = z - table @ self.alpha.data.astype(np.float64)
        return float(np.linalg.norm(residual) / max(np.linalg.norm(z), 1e-30))


def soft_embed(
    h: Tensor | ArrayLike,
    params: ModelParams,
    temperature: float = 1.0,
    top_k: int | None = None,
    hidden_state: bool = False,
) -> LatentToken:
    """Project a hidden state into the embedding column space.

    Computes ``l = h @ W`` (``W = E``), ``alpha = softmax(l / T)``, optionally
    keeps the ``top_k`` largest entries and renormalizes, then ``z = E alpha``.
    ``h`` may be a single ``(d,)`` vector or a ``(n, d)`` batch.

    Args:
        h (Tensor | ArrayLike): Hidden state(s).
        params (ModelParams): Provides ``E``.
        temperature (float): Softmax temperature ``T > 0``.
        top_k (int | None): Prune ``alpha`` to its ``k`` largest entries.
        hidden_state (bool): Return ``z = h`` instead (ablation).

    Raises:
        InvalidArgumentError: On ``T <= 0`` or ``top_k`` outside ``[1, V]``.

    Returns:
        LatentToken: ``alpha`` and the fed-back vector.
    """
    vocab = params.config.vocab
    if top_k is not None and not 1 <= top_k <= vocab:
        raise InvalidArgumentError("top_k", f"{top_k} outside [1, {vocab}]")
    hidden = h if isinstance(h, Tensor) else Tensor(np.asarray(h))
    alpha = F.softmax(hidden @ params.head, axis=-1, temperature=temperature)
    if top_k is not None and top_k < vocab:
        keep = np.zeros(alpha.shape, dtype=alpha.dtype)
        np.put_along_axis(keep, top_k_indices(alpha.data, top_k), 1.0, axis=-1)
        alpha = alpha * keep
        alpha = alpha / alpha.sum(axis=-1, keepdims=True)
    z = hidden if hidden_state else alpha @ params.embedding.T
    return LatentToken(alpha=alpha, z=z)


# ---------------------------------------------------------------------- #
# Encoder
# ---------------------------------------------------------------------- #
def encode_latents(
    encoder: ModelParams,
    examples: Sequence[SegmentedExample],
    temperature: float = 1.0,
    top_k: int | None = None,
    hidden_state: bool = False,
    no_ltim: bool = False,
) -> list[list[LatentToken]]:
    """Run the encoder over ``[Q, <think>, S_1, L_1, ..., S_N, L_N]`` and read out ``z_1..z_N``.

    Returns:
        list[list[LatentToken]]: One list of N tokens per example.
    """
    layouts = [encoder_layout(example) for example in examples]
    inputs = [
        SequenceInput.from_tokens([t for t in layout.tokens if t is not None])
        for layout in layouts
    ]
    masks = [
        mask_ablation_variants(layout) if no_ltim else build_ltim(layout) for layout in layouts
    ]
    hidden = forward_batch(encoder, inputs, masks).hidden
    result: list[list[LatentToken]] = []
    for row, layout in enumerate(layouts):
        slots = hidden[row, layout.latent_positions]
        batch = soft_embed(slots, encoder, temperature, top_k, hidden_state)
        result.append(
            [LatentToken(batch.alpha[k], batch.z[k]) for k in range(layout.slot_count)]
        )
    return result


def layout_input(layout: SequenceLayout, latents: Sequence[Tensor | ArrayLike]) -> SequenceInput:
    """Fill ``None`` slots of ``layout`` with ``latents`` in slot order."""
    slots = layout.latent_positions
    if len(slots) != len(latents):
        raise InvalidArgumentError("latents", f"{len(latents)} vectors for {len(slots)} slots")
    vectors = dict(zip(slots, latents, strict=True))
    entries: list[TokenId | DenseVector] = []
    for position, token in enumerate(layout.tokens):
        if token is None:
            entries.append(DenseVector.of(vectors[position]))
        else:
            entries.append(TokenId(token))
    return SequenceInput(tuple(entries))


# ---------------------------------------------------------------------- #
# Stage 1
# ---------------------------------------------------------------------- #
@dataclass
class _Stage1Batch:
    inputs: list[SequenceInput] = field(default_factory=list)
    masks: list[AttentionMask] = field(default_factory=list)
    rows: list[int] = field(default_factory=list)
    cols: list[int] = field(default_factory=list)
    targets: list[int] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)


def stage1_terms(
    latents: Sequence[LatentToken],
    example: SegmentedExample,
    no_ltsum: bool = False,
) -> list[tuple[SequenceLayout, AttentionMask, list[int], list[int]]]:
    """Decoder sequences of one example: ``(layout, mask, predictor positions, targets)`` per step.

    The first token of ``Y_i`` is predicted at ``z_i``'s position and every
    later one at the preceding ``Y_i`` position. Without LTSuM only the last
    step is kept, under a causal mask.

    Raises:
        InvalidArgumentError: If the latent count differs from N.
    """
    if len(latents) != example.n_segments:
        raise InvalidArgumentError(
            "encoder_latents", f"{len(latents)} latents for {example.n_segments} segments"
        )
    steps = [example.n_segments] if no_ltsum else range(1, example.n_segments + 1)
    terms = []
    for step in steps:
        layout = stage2_layout(example) if no_ltsum else decoder_layout(example, step)
        mask = mask_ablation_variants(layout) if no_ltsum else build_ltsum(layout, step)
        suffix = suffix_positions(layout, step)
        predictors = [layout.latent_positions[step - 1], *suffix[:-1]]
        targets = [int(layout.tokens[p]) for p in suffix]  # type: ignore[arg-type]
        terms.append((layout, mask, predictors, targets))
    return terms


def stage1_sup_loss_batch(
    latents: Sequence[Sequence[LatentToken]],
    examples: Sequence[SegmentedExample],
    decoder: ModelParams,
    no_ltsum: bool = False,
) -> Tensor:
    """Mean over examples of the stage-1 supervised loss, in one forward pass."""
    if len(latents) != len(examples) or not examples:
        raise InvalidArgumentError("examples", "need one latent list per non-empty example batch")
    batch = _Stage1Batch()
    for tokens, example in zip(latents, examples, strict=True):
        terms = stage1_terms(tokens, example, no_ltsum)
        for layout, mask, predictors, targets in terms:
            row = len(batch.inputs)
            batch.inputs.append(layout_input(layout, [t.z for t in tokens]))
            batch.masks.append(mask)
            weight = 1.0 / (len(targets) * len(terms) * len(examples))
            batch.rows.extend([row] * len(targets))
            batch.cols.extend(predictors)
            batch.targets.extend(targets)
            batch.weights.extend([weight] * len(targets))
    logits = forward_batch(decoder, batch.inputs, batch.masks).logits
    picked = logits[np.asarray(batch.rows), np.asarray(batch.cols)]
    nll = F.nll_from_logits(picked, batch.targets)
    return (nll * lift(np.asarray(batch.weights), nll.dtype)).sum()


def stage1_sup_loss(
    encoder_latents: Sequence[LatentToken],
    example: SegmentedExample,
    decoder: ModelParams,
    no_ltsum: bool = False,
) -> Tensor:
    """``(1/N) sum_i (1/|J_i|) sum_{t in J_i} -log p(x_t | Q, <think>, z_1..z_i)``.

    Differentiable w.r.t. the decoder and, through each ``z``, the encoder.

    Raises:
        InvalidArgumentError: If the latent count differs from N.
    """
    return stage1_sup_loss_batch([encoder_latents], [example], decoder, no_ltsum)


# ---------------------------------------------------------------------- #
# Stage 2
# ---------------------------------------------------------------------- #
@dataclass(frozen=True)
class SlotAssignment:
    """Supervised positions of a stage-2 sequence.

    ``latent_positions[k]`` predicts the soft label ``soft_labels[k]``;
    ``explicit_positions[k]`` predicts the token ``hard_labels[k]``.
    """

    latent_positions: tuple[int, ...]
    soft_labels: NDArray[np.float64]
    explicit_positions: tuple[int, ...]
    hard_labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.latent_positions or not self.explicit_positions:
            msg = "latent and explicit sets must both be non-empty"
            raise InvalidArgumentError("assignment", msg)
        if set(self.latent_positions) & set(self.explicit_positions):
            raise InvalidArgumentError("assignment", "latent and explicit positions overlap")
        if len(set(self.latent_positions)) != len(self.latent_positions) or len(
            set(self.explicit_positions)
        ) != len(self.explicit_positions):
            raise InvalidArgumentError("assignment", "positions repeat")
        if len(self.soft_labels) != len(self.latent_positions):
            raise InvalidArgumentError("soft_labels", "one label per latent position")
        if len(self.hard_labels) != len(self.explicit_positions):
            raise InvalidArgumentError("hard_labels", "one label per explicit position")


def stage2_assignment(
    example: SegmentedExample,
    alphas: ArrayLike,
    label_top_k: int | None = None,
) -> tuple[SequenceLayout, SlotAssignment]:
    """Layout and supervision of ``[Q, <think>, z_1..z_N, </think>, Answer]``.

    ``<think>`` predicts ``alpha_1``, ``z_t`` predicts ``alpha_{t+1}``, ``z_N``
    predicts ``</think>`` and each following position predicts the next
    answer token (the last one ``<eos>``).

    Raises:
        InvalidArgumentError: If ``alphas`` does not hold N rows.
    """
    labels = np.asarray(alphas, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[0] != example.n_segments:
        msg = f"expected ({example.n_segments}, V), got {labels.shape}"
        raise InvalidArgumentError("alphas", msg)
    labels = prune_top_k(labels, label_top_k)
    layout = stage2_layout(example)
    slots = layout.latent_positions
    think = layout.positions("think_open")[0]
    close = layout.positions("think_close")[0]
    answer = layout.positions("answer")
    explicit_targets = [close, *answer]
    return layout, SlotAssignment(
        latent_positions=(think, *slots[:-1]),
        soft_labels=labels,
        explicit_positions=tuple(p - 1 for p in explicit_targets),
        hard_labels=tuple(int(layout.tokens[p] or 0) for p in explicit_targets),
    )


def distillation_temperature_transform(
    p: ProbVector | ArrayLike, q_logits: ArrayLike, temperature: float
) -> tuple[ProbVector, ProbVector, float]:
    """Temperature-scaled target and student distributions.

    Returns:
        tuple[ProbVector, ProbVector, float]: ``p^(1/T)`` renormalized,
        ``softmax(q_logits / T)`` and the loss scale ``T^2``.
    """
    if not temperature > 0.0:
        raise InvalidArgumentError("temperature", f"must be > 0, got {temperature}")
    target = _sharpen(as_probs(p), temperature)
    logits = Tensor(np.asarray(q_logits, dtype=np.float64))
    student = F.softmax(logits, temperature=temperature).data
    return ProbVector(target), ProbVector(student / student.sum()), temperature**2


def _sharpen(p: NDArray[Any], temperature: float) -> NDArray[np.float64]:
    if temperature == 1.0:
        return np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp = np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), -np.inf) / temperature
    weights = np.exp(logp - logp.max(axis=-1, keepdims=True))
    return np.asarray(weights / weights.sum(axis=-1, keepdims=True))


def stage2_auto_loss(
    logits: Tensor,
    assignment: SlotAssignment,
    lam: float = 1.0,
    beta: float = 1.0,
    temperature: float = 1.0,
) -> Tensor:
    """``lam * mean KL(p_t || q_t) + beta * mean(-log q_t[y_t])`` over one sequence.

    With ``temperature != 1`` the KL term compares ``p^(1/T)`` with
    ``softmax(l / T)`` and is scaled by ``T^2``.

    Raises:
        InvalidArgumentError: On negative weights or positions past the
            sequence.
    """
    if lam < 0 or beta < 0:
        raise InvalidArgumentError("lambda/beta", "weights must be non-negative")
    length = logits.shape[0]
    positions = (*assignment.latent_positions, *assignment.explicit_positions)
    if max(positions) >= length or min(positions) < 0:
        raise InvalidArgumentError("assignment", f"positions outside [0, {length})")
    total, _, _ = stage2_loss_parts(logits, assignment, lam, beta, temperature)
    return total


def stage2_loss_parts(
    logits: Tensor,
    assignment: SlotAssignment,
    lam: float = 1.0,
    beta: float = 1.0,
    temperature: float = 1.0,
) -> tuple[Tensor, Tensor, Tensor]:
    """Weighted stage-2 loss together with its unweighted KL and CE means."""
    kl = stage2_kl_term(logits, assignment, temperature)
    ce = F.nll_from_logits(
        logits[np.asarray(assignment.explicit_positions)], assignment.hard_labels
    ).mean()
    return kl * lam + ce * beta, kl, ce


def stage2_kl_term(logits: Tensor, assignment: SlotAssignment, temperature: float = 1.0) -> Tensor:
    """Mean KL part of the stage-2 loss, including the ``T^2`` scale."""
    student = logits[np.asarray(assignment.latent_positions)]
    target = _sharpen(assignment.soft_labels, temperature)
    return F.soft_target_kl(target, student, temperature).mean() * (temperature**2)
