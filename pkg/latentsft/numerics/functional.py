"""Fused differentiable operations used by the transformer and the losses."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.numerics.probability import EPSILON
from latentsft.numerics.tensor import Tensor, lift

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

_GELU_C = math.sqrt(2.0 / math.pi)


def softmax(x: Tensor, axis: int = -1, temperature: float = 1.0) -> Tensor:
    """Softmax of ``x / temperature`` along ``axis``."""
    if not temperature > 0.0:
        raise InvalidArgumentError("temperature", f"must be > 0, got {temperature}")
    scaled = (x.data - x.data.max(axis=axis, keepdims=True)) / temperature
    weights = np.exp(scaled)
    out = weights / weights.sum(axis=axis, keepdims=True)

    def backward(g: NDArray[Any]) -> tuple[NDArray[Any]]:
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner) / temperature,)

    return Tensor.from_op(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1, temperature: float = 1.0) -> Tensor:
    """Log-softmax of ``x / temperature`` along ``axis``."""
    if not temperature > 0.0:
        raise InvalidArgumentError("temperature", f"must be > 0, got {temperature}")
    scaled = (x.data - x.data.max(axis=axis, keepdims=True)) / temperature
    out = scaled - np.log(np.exp(scaled).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g: NDArray[Any]) -> tuple[NDArray[Any]]:
        total = g.sum(axis=axis, keepdims=True)
        return ((g - probs * total) / temperature,)

    return Tensor.from_op(out, (x,), backward)


def masked_softmax(scores: Tensor, allow: NDArray[np.bool_]) -> Tensor:
    """Softmax over the last axis where blocked entries get exactly zero weight.

    Args:
        scores (Tensor): Attention scores ``(..., L, L)``.
        allow (NDArray[bool]): Broadcastable allow-matrix; every row must allow
            at least one entry.

    Returns:
        Tensor: Attention weights.
    """
    masked = np.where(allow, scores.data, -np.inf)
    weights = np.exp(masked - masked.max(axis=-1, keepdims=True))
    out = weights / weights.sum(axis=-1, keepdims=True)

    def backward(g: NDArray[Any]) -> tuple[NDArray[Any]]:
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return Tensor.from_op(out, (scores,), backward)


def rms_norm(x: Tensor, gain: Tensor, eps: float = 1e-5) -> Tensor:
    """Root-mean-square normalization over the last axis with a learned gain."""
    data = x.data
    scale = 1.0 / np.sqrt((data * data).mean(axis=-1, keepdims=True) + eps)
    normed = data * scale
    gain_data = gain.data

    def backward(g: NDArray[Any]) -> tuple[NDArray[Any], NDArray[Any]]:
        grad_gain = (g * normed).reshape(-1, normed.shape[-1]).sum(axis=0)
        grad_normed = g * gain_data
        inner = (grad_normed * normed).mean(axis=-1, keepdims=True)
        return scale * (grad_normed - normed * inner), grad_gain

    return Tensor.from_op(normed * gain_data, (x, gain), backward)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    a = x.data
    inner = _GELU_C * (a + 0.044715 * a**3)
    t = np.tanh(inner)
    out = 0.5 * a * (1.0 + t)

    def backward(g: NDArray[Any]) -> tuple[NDArray[Any]]:
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * a * a)
        return (g * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * d_inner),)

    return Tensor.from_op(out, (x,), backward)


def embed_sequence(
    embedding: Tensor,
    token_ids: NDArray[np.int64],
    dense: Sequence[tuple[int, int, Tensor]] = (),
) -> Tensor:
    """Assemble ``(B, L, d)`` inputs from token lookups and dense vectors.

    Args:
        embedding (Tensor): Embedding matrix ``E`` of shape ``(d, V)``; column
            ``v`` is the embedding of token ``v``.
        token_ids (NDArray[int]): ``(B, L)`` ids; entries of ``-1`` are filled
            from ``dense``.
        dense (Sequence[tuple[int, int, Tensor]]): ``(batch, position, vector)``
            triples; each vector has length ``d``.

    Returns:
        Tensor: Input vectors, differentiable w.r.t. ``E`` and dense vectors.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    table = embedding.data
    token_mask = ids >= 0
    out = np.zeros((*ids.shape, table.shape[0]), dtype=table.dtype)
    out[token_mask] = table.T[ids[token_mask]]
    for batch, position, vector in dense:
        if vector.shape != (table.shape[0],):
            raise InvalidArgumentError(
                "dense", f"vector shape {vector.shape} != ({table.shape[0]},)"
            )
        out[batch, position] = vector.data

    def backward(g: NDArray[Any]) -> list[NDArray[Any] | None]:
        grad_table = np.zeros_like(table)
        np.add.at(grad_table.T, ids[token_mask], g[token_mask])
        grads: list[NDArray[Any] | None] = [grad_table]
        grads.extend(np.array(g[batch, position]) for batch, position, _ in dense)
        return grads

    parents = (embedding, *(vector for _, _, vector in dense))
    return Tensor.from_op(out, parents, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack equally shaped tensors along a new axis."""
    if not tensors:
        raise InvalidArgumentError("tensors", "cannot stack an empty sequence")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g: NDArray[Any]) -> list[NDArray[Any]]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return Tensor.from_op(out, tuple(tensors), backward)


def nll_from_logits(logits: Tensor, targets: ArrayLike) -> Tensor:
    """Per-row ``-log softmax(logits)[target]``.

    Args:
        logits (Tensor): ``(n, V)`` scores.
        targets (ArrayLike): ``n`` token ids.

    Returns:
        Tensor: ``(n,)`` negative log-likelihoods.
    """
    index = np.asarray(targets, dtype=np.int64)
    vocab = logits.shape[-1]
    if np.any(index < 0) or np.any(index >= vocab):
        raise InvalidArgumentError("targets", f"ids must lie in [0, {vocab})")
    rows = np.arange(index.shape[0])
    return -log_softmax(logits, axis=-1)[rows, index]


def soft_target_kl(
    target: ArrayLike,
    logits: Tensor,
    temperature: float = 1.0,
) -> Tensor:
    """Per-row ``KL(p || softmax(logits / T))`` for fixed soft targets ``p``.

    Args:
        target (ArrayLike): ``(n, V)`` rows on the simplex.
        logits (Tensor): ``(n, V)`` student scores.
        temperature (float): Student softmax temperature.

    Returns:
        Tensor: ``(n,)`` divergences.
    """
    p = np.asarray(target, dtype=logits.dtype)
    support = p > 0.0
    # p ln p is constant w.r.t. the student; 0 ln 0 contributes nothing.
    negentropy = np.where(support, p * np.log(np.where(support, p, 1.0)), 0.0).sum(
        axis=-1
    )
    cross = -(lift(p, logits.dtype) * log_softmax(logits, temperature=temperature)).sum(
        axis=-1
    )
    return cross + negentropy


def floor_probs(p: Tensor, epsilon: float = EPSILON) -> Tensor:
    """Differentiable floor-and-renormalize along the last axis."""
    floored = p.clip_min(epsilon)
    return floored / floored.sum(axis=-1, keepdims=True)


def kl_divergence(p: Tensor, q: Tensor | ArrayLike) -> Tensor:
    """Differentiable ``sum p (ln p - ln q)`` over the last axis.

    Zero entries of ``p`` contribute nothing and only ``q`` is floored.
    """
    q_t = lift(q, p.dtype)
    safe_p = p + (p.data == 0.0).astype(p.dtype)
    return (p * (safe_p.log() - floor_probs(q_t).log())).sum(axis=-1)
