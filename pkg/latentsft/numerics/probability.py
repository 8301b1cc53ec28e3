"""Probability-simplex primitives in float64.

These are the plain-number versions used by metrics, tests and label
bookkeeping. Differentiable counterparts live in ``numerics.functional``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft.exceptions.errors import InvalidArgumentError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

EPSILON: float = 1e-12
"""Probability floor applied before every logarithm."""

SIMPLEX_TOLERANCE: float = 1e-9


@dataclass(frozen=True)
class ProbVector:
    """A point on the vocabulary simplex.

    Args:
        probs (NDArray): Non-negative float64 entries summing to one.

    Raises:
        InvalidArgumentError: If the entries leave the simplex.
    """

    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidArgumentError("probs", "must be a non-empty vector")
        if not np.all(np.isfinite(probs)):
            raise InvalidArgumentError("probs", "contains non-finite entries")
        if np.any(probs < 0.0):
            raise InvalidArgumentError("probs", "contains negative entries")
        total = float(probs.sum())
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise InvalidArgumentError("probs", f"sums to {total}, not 1")
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return int(self.probs.size)

    def argmax(self) -> int:
        """Most probable index; ties go to the lower index."""
        return int(np.argmax(self.probs))


def as_probs(value: ProbVector | ArrayLike) -> NDArray[np.float64]:
    """Return the float64 array behind a ProbVector or array-like."""
    if isinstance(value, ProbVector):
        return value.probs
    return np.asarray(value, dtype=np.float64)


def floor_probs(
    probs: ArrayLike, epsilon: float = EPSILON, axis: int = -1
) -> NDArray[np.float64]:
    """Floor entries at ``epsilon`` and renormalize along ``axis``."""
    floored = np.maximum(np.asarray(probs, dtype=np.float64), epsilon)
    return np.asarray(floored / floored.sum(axis=axis, keepdims=True))


def softmax_with_temperature(logits: ArrayLike, temperature: float = 1.0) -> ProbVector:
    """Stable softmax of ``logits / temperature``.

    Args:
        logits (ArrayLike): Finite real scores.
        temperature (float): Positive temperature.

    Raises:
        InvalidArgumentError: On a non-positive temperature or non-finite logits.

    Returns:
        ProbVector: ``exp((l - max l) / T)`` normalized.
    """
    if not temperature > 0.0:
        raise InvalidArgumentError("temperature", f"must be > 0, got {temperature}")
    values = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("logits", "must be finite")
    scaled = (values - values.max()) / temperature
    weights = np.exp(scaled)
    return ProbVector(weights / weights.sum())


def kl_divergence(p: ProbVector | ArrayLike, q: ProbVector | ArrayLike) -> float:
    """KL(p || q) with ``0 ln 0 = 0`` and an epsilon-floored ``q``.

    Raises:
        InvalidArgumentError: If the vectors differ in length.
    """
    p_arr, q_arr = as_probs(p), as_probs(q)
    if p_arr.shape != q_arr.shape:
        raise InvalidArgumentError(
            "q", f"length {q_arr.size} does not match p length {p_arr.size}"
        )
    support = p_arr > 0.0
    q_safe = floor_probs(q_arr)
    value = float(
        np.sum(p_arr[support] * (np.log(p_arr[support]) - np.log(q_safe[support])))
    )
    # Rounding can leave a tiny negative residue for p == q.
    return max(value, 0.0)


def cross_entropy(q: ProbVector | ArrayLike, target: int) -> float:
    """``-ln q[target]`` with an epsilon-floored ``q``.

    Raises:
        InvalidArgumentError: If ``target`` is outside ``[0, V)``.
    """
    q_arr = as_probs(q)
    if not 0 <= target < q_arr.size:
        raise InvalidArgumentError("target", f"{target} outside [0, {q_arr.size})")
    return -math.log(float(floor_probs(q_arr)[target]))


def entropy(probs: ArrayLike) -> float:
    """Shannon entropy in nats, ignoring zero entries."""
    arr = np.asarray(probs, dtype=np.float64)
    nonzero = arr[arr > 0.0]
    return float(-np.sum(nonzero * np.log(nonzero)))


def top_k_indices(probs: ArrayLike, k: int) -> NDArray[np.int64]:
    """Indices of the ``k`` largest entries, ties broken by lower index."""
    arr = np.asarray(probs, dtype=np.float64)
    if not 1 <= k <= arr.shape[-1]:
        raise InvalidArgumentError("k", f"{k} outside [1, {arr.shape[-1]}]")
    order = np.argsort(-arr, axis=-1, kind="stable")
    return np.asarray(order[..., :k], dtype=np.int64)


def prune_top_k(probs: ArrayLike, k: int | None) -> NDArray[Any]:
    """Zero all but the top-``k`` entries per row and renormalize."""
    arr = np.asarray(probs)
    if k is None or k == arr.shape[-1]:
        return arr
    keep = np.zeros(arr.shape, dtype=bool)
    np.put_along_axis(keep, top_k_indices(arr, k), values=True, axis=-1)
    pruned = np.where(keep, arr, 0.0)
    return np.asarray(pruned / pruned.sum(axis=-1, keepdims=True), dtype=arr.dtype)
