"""Alignment of latent traces with explicit chains: ECR@K and the path posterior.

A latent step is assumed to cover ``r`` consecutive chain tokens, so step
``t`` (0-based) is compared against the token set ``S_t = x[t r : (t + 1) r]``.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import logsumexp, softmax

from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.models.reports import EcrSummary, NeffSummary, PathPosterior
from latentsft.numerics.probability import entropy, top_k_indices

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

DEFAULT_K = 100
DEFAULT_TAU = 1.0
DEFAULT_EPS = 1e-8
NEFF_THRESHOLD = 1.7


def aligned_steps(steps: int, chain_length: int, r: int) -> int:
    """``T' = min(T, ceil(L / r))``."""
    if r < 1:
        raise InvalidArgumentError("r", f"must be >= 1, got {r}")
    return min(steps, math.ceil(chain_length / r))


def aligned_sets(chain: Sequence[int], r: int, steps: int) -> list[frozenset[int]]:
    """Token sets ``S_1..S_T'`` of ``chain`` for a trace of ``steps`` latent steps."""
    count = aligned_steps(steps, len(chain), r)
    return [frozenset(int(x) for x in chain[t * r : (t + 1) * r]) for t in range(count)]


def _check(probs: ArrayLike, chain: Sequence[int], k: int) -> NDArray[np.float64]:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InvalidArgumentError("probs", "need at least one latent step as a (T, V) matrix")
    if not chain:
        raise InvalidArgumentError("chain", "must be non-empty")
    if not 1 <= k <= arr.shape[1]:
        raise InvalidArgumentError("k", f"{k} outside [1, {arr.shape[1]}]")
    return arr


def ecr_at_k(probs: ArrayLike, chain: Sequence[int], r: int, k: int) -> float:
    """Explicit coverage rate: mean ``|S_t ∩ TopK(p_t)|`` over the aligned steps.

    Args:
        probs (ArrayLike): ``(T, V)`` latent-step distributions.
        chain (Sequence[int]): Reference chain token ids.
        r (int): Compression ratio.
        k (int): Top-K size; ties at the K-th value go to the lower id.

    Raises:
        InvalidArgumentError: On an empty trace or chain, or ``k`` outside ``[1, V]``.

    Returns:
        float: A value in ``[0, r]``.
    """
    arr = _check(probs, chain, k)
    sets = aligned_sets(chain, r, arr.shape[0])
    hits = [len(s & set(top_k_indices(arr[t], k).tolist())) for t, s in enumerate(sets)]
    return float(np.mean(hits))


def n_eff(posterior: ArrayLike) -> float:
    """Effective number of supported paths: ``exp`` of the posterior entropy."""
    return float(np.exp(entropy(posterior)))


def path_posterior(
    probs: ArrayLike,
    chains: Sequence[Sequence[int]],
    r: int,
    k: int = DEFAULT_K,
    tau: float = DEFAULT_TAU,
    eps: float = DEFAULT_EPS,
) -> PathPosterior:
    """Posterior over candidate chains supported by one latent trace.

    ``mass_{m,t}`` is the probability ``p_t`` puts on the tokens of
    ``S_{m,t}`` that are also in its top-K; ``score_m`` averages
    ``log(mass + eps)`` over the chain's own ``T'_m`` steps and
    ``P = softmax(score / tau)``. The per-step view softmaxes
    ``log(mass_{m,t} + eps)`` over the chains still aligned at step ``t``.

    Args:
        probs (ArrayLike): ``(T, V)`` latent-step distributions.
        chains (Sequence[Sequence[int]]): ``M >= 2`` candidate chains.
        r (int): Compression ratio.
        k (int): Top-K size, capped at ``V``.
        tau (float): Softmax temperature.
        eps (float): Floor inside the logarithm.

    Raises:
        InvalidArgumentError: If ``M < 2``, ``tau <= 0`` or ``eps <= 0``.

    Returns:
        PathPosterior: Scores, posterior, ``N_eff`` and Top-2 ratio.
    """
    if len(chains) < 2:
        raise InvalidArgumentError("chains", f"need at least 2 chains, got {len(chains)}")
    if tau <= 0.0:
        raise InvalidArgumentError("tau", f"must be > 0, got {tau}")
    if eps <= 0.0:
        raise InvalidArgumentError("eps", f"must be > 0, got {eps}")
    arr = np.asarray(probs, dtype=np.float64)
    k = min(k, arr.shape[-1]) if arr.ndim == 2 else k
    for chain in chains:
        arr = _check(arr, chain, k)
    top = [set(top_k_indices(row, k).tolist()) for row in arr]

    log_mass: list[list[float]] = []
    for chain in chains:
        sets = aligned_sets(chain, r, arr.shape[0])
        log_mass.append(
            [math.log(sum(arr[t, x] for x in s & top[t]) + eps) for t, s in enumerate(sets)]
        )
    scores = np.asarray([np.mean(values) for values in log_mass])
    posterior = softmax(scores / tau)
    ordered = np.sort(posterior)[::-1]

    step_posterior, step_n_eff = [], []
    for t in range(max(len(values) for values in log_mass)):
        logits = np.asarray(
            [values[t] / tau if t < len(values) else -np.inf for values in log_mass]
        )
        weights = np.exp(logits - logsumexp(logits))
        step_posterior.append(weights.tolist())
        step_n_eff.append(n_eff(weights))

    return PathPosterior(
        scores=scores.tolist(),
        posterior=posterior.tolist(),
        aligned_steps=[len(values) for values in log_mass],
        n_eff=n_eff(posterior),
        top2=float(ordered[1] / ordered[0]),
        step_posterior=step_posterior,
        step_n_eff=step_n_eff,
    )


def summarize_ecr(values: Sequence[float], k: int, r: int) -> EcrSummary:
    """Mean, median and the share of samples with ECR above one."""
    if not values:
        raise InvalidArgumentError("values", "must be non-empty")
    arr = np.asarray(values, dtype=np.float64)
    return EcrSummary(
        k=k,
        ratio=r,
        samples=int(arr.size),
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        above_one=float(np.mean(arr > 1.0)),
    )


def summarize_neff(
    posteriors: Sequence[PathPosterior], k: int, tau: float, threshold: float = NEFF_THRESHOLD
) -> NeffSummary:
    """Median and mean ``N_eff``, mean Top-2 and the share above ``threshold``."""
    if not posteriors:
        raise InvalidArgumentError("posteriors", "must be non-empty")
    values = np.asarray([p.n_eff for p in posteriors])
    return NeffSummary(
        k=k,
        tau=tau,
        samples=int(values.size),
        median_n_eff=float(np.median(values)),
        mean_n_eff=float(values.mean()),
        mean_top2=float(np.mean([p.top2 for p in posteriors])),
        threshold=threshold,
        above_threshold=float(np.mean(values > threshold)),
    )
