"""Hidden states versus token embeddings.

Collects final-layer hidden states over the explicit sequences of a corpus and
compares them with the columns of the tied embedding matrix.
"""

from __future__ import annotations

import csv
from typing import TYPE_CHECKING

import numpy as np

from latentsft import get_logger
from latentsft.analysis.distances import fid, mean_cosine, median_bandwidth, mmd2
from latentsft.analysis.spectral import effective_rank, normalized_spectrum
from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.models.reports import DistributionStats, PrelimReport
from latentsft.numerics.tensor import no_grad
from latentsft.segmask import cot_layout
from latentsft.transformer.forward import SequenceInput, forward_batch
from latentsft.transformer.masking import AttentionMask

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    from latentsft.segmask import SegmentedExample
    from latentsft.transformer.params import ModelParams

log = get_logger(__name__)

SCATTER_FIELDS = ("source", "x", "y")


def collect_hidden(
    params: ModelParams, examples: Sequence[SegmentedExample], batch_size: int = 32
) -> NDArray[np.float64]:
    """Final-layer hidden states at every position of every explicit sequence."""
    if not examples:
        raise InvalidArgumentError("corpus", "must be non-empty")
    rows = []
    with no_grad():
        for start in range(0, len(examples), batch_size):
            batch = examples[start : start + batch_size]
            tokens = [
                [int(t) for t in cot_layout(e).tokens]  # type: ignore[arg-type]
                for e in batch
            ]
            out = forward_batch(
                params,
                [SequenceInput.from_tokens(t) for t in tokens],
                [AttentionMask.causal(len(t)) for t in tokens],
            )
            rows.extend(out.hidden.data[i, : len(t)] for i, t in enumerate(tokens))
    return np.concatenate(rows).astype(np.float64)


def distribution_stats(points: ArrayLike) -> DistributionStats:
    """Mean norm, mean per-dimension variance and mean per-dimension mean."""
    arr = np.asarray(points, dtype=np.float64)
    return DistributionStats(
        count=int(arr.shape[0]),
        mean_norm=float(np.linalg.norm(arr, axis=1).mean()),
        mean_variance=float(arr.var(axis=0).mean()),
        mean_of_means=float(arr.mean(axis=0).mean()),
    )


def _subsample(
    points: NDArray[np.float64], limit: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    if points.shape[0] <= limit:
        return points
    return points[np.sort(rng.choice(points.shape[0], size=limit, replace=False))]


def hidden_vs_embedding_report(
    params: ModelParams,
    examples: Sequence[SegmentedExample],
    seed: int = 0,
    pairs: int = 2000,
    max_points: int = 2000,
) -> tuple[PrelimReport, NDArray[np.float64], NDArray[np.float64]]:
    """Compare hidden-state and embedding distributions.

    Args:
        params (ModelParams): Trained (or freshly initialized) parameters.
        examples (Sequence[SegmentedExample]): Corpus to collect hidden states on.
        seed (int): Seed for subsampling and cosine pairs.
        pairs (int): Random pairs per cosine estimate.
        max_points (int): Hidden states kept for FID and MMD.

    Raises:
        InvalidArgumentError: If ``examples`` is empty.

    Returns:
        tuple: The report, the hidden states used and the embedding rows.
    """
    rng = np.random.default_rng(seed)
    hidden = _subsample(collect_hidden(params, examples), max_points, rng)
    embedding = params.embedding.data.T.astype(np.float64)
    log.info("Comparing %d hidden states with %d embeddings", hidden.shape[0], embedding.shape[0])
    d, vocab = params.embedding.shape
    report = PrelimReport(
        fid=fid(hidden, embedding),
        mmd2=mmd2(hidden, embedding),
        fid_self=fid(embedding, embedding),
        mmd2_self=mmd2(embedding, embedding),
        cosine_cross=mean_cosine(hidden, embedding, pairs, rng),
        cosine_self=mean_cosine(embedding, embedding, pairs, rng, distinct=True),
        bandwidth=median_bandwidth(hidden, embedding),
        effective_rank_embedding=effective_rank(embedding),
        effective_rank_hidden=effective_rank(hidden),
        rank_limit=min(d, vocab),
        embedding_spectrum=normalized_spectrum(embedding),
        hidden_spectrum=normalized_spectrum(hidden),
        hidden=distribution_stats(hidden),
        embedding=distribution_stats(embedding),
    )
    return report, hidden, embedding


def pca_projection(
    hidden: ArrayLike, embedding: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Both sets projected onto the top two principal components of the pooled data."""
    a = np.asarray(hidden, dtype=np.float64)
    b = np.asarray(embedding, dtype=np.float64)
    pooled = np.vstack([a, b])
    center = pooled.mean(axis=0)
    _, _, vt = np.linalg.svd(pooled - center, full_matrices=False)
    basis = vt[:2].T
    if basis.shape[1] < 2:
        basis = np.pad(basis, ((0, 0), (0, 2 - basis.shape[1])))
    return (a - center) @ basis, (b - center) @ basis


def write_scatter(path: Path, hidden: ArrayLike, embedding: ArrayLike) -> int:
    """Write the 2-D projection as CSV rows ``source,x,y``."""
    hidden_2d, embedding_2d = pca_projection(hidden, embedding)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SCATTER_FIELDS)
        for source, points in (("hidden", hidden_2d), ("embedding", embedding_2d)):
            writer.writerows((source, f"{x:.6g}", f"{y:.6g}") for x, y in points)
    return hidden_2d.shape[0] + embedding_2d.shape[0]
