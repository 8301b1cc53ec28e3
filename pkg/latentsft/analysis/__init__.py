"""Trace alignment metrics and hidden-state diagnostics."""

from latentsft.analysis.alignment import (
    aligned_sets,
    ecr_at_k,
    n_eff,
    path_posterior,
    summarize_ecr,
    summarize_neff,
)
from latentsft.analysis.distances import fid, mmd2
from latentsft.analysis.prelim import hidden_vs_embedding_report, write_scatter
from latentsft.analysis.spectral import effective_rank, spectrum

__all__ = [
    "aligned_sets",
    "ecr_at_k",
    "effective_rank",
    "fid",
    "hidden_vs_embedding_report",
    "mmd2",
    "n_eff",
    "path_posterior",
    "spectrum",
    "summarize_ecr",
    "summarize_neff",
    "write_scatter",
]
