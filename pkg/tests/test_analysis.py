"""Tests for latentsft.analysis."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from latentsft.analysis import (
    aligned_sets,
    ecr_at_k,
    effective_rank,
    fid,
    hidden_vs_embedding_report,
    mmd2,
    n_eff,
    path_posterior,
    summarize_ecr,
    summarize_neff,
    write_scatter,
)
from latentsft.analysis.distances import mean_cosine, median_bandwidth
from latentsft.analysis.spectral import normalized_spectrum
from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.models.config import ModelConfig
from latentsft.segmask import segment_example
from latentsft.synthdata.generator import gen_problem
from latentsft.synthdata.tokenizer import Tokenizer
from latentsft.transformer.params import init_params


class TestEcr:
    """Explicit coverage rate."""

    def test_hand_example(self) -> None:
        """Two covered tokens at step 1 and one at step 2 give 1.5."""
        probs = [
            [0.4, 0.3, 0.1, 0.1, 0.05, 0.05],
            [0.05, 0.05, 0.4, 0.05, 0.4, 0.05],
        ]
        assert ecr_at_k(probs, [0, 1, 2, 3], r=2, k=2) == pytest.approx(1.5)

    def test_no_overlap(self) -> None:
        """A top-K disjoint from every window scores zero."""
        probs = [[0.0, 0.0, 0.5, 0.5]]
        assert ecr_at_k(probs, [0, 1], r=2, k=2) == 0.0

    def test_full_vocabulary(self) -> None:
        """K = V counts every distinct window token."""
        probs = np.full((3, 5), 0.2)
        assert ecr_at_k(probs, [0, 0, 1, 2, 3], r=2, k=5) == pytest.approx((1 + 2 + 1) / 3)

    def test_alignment_truncates_to_chain(self) -> None:
        """T' = min(T, ceil(L / r)) and windows are sets."""
        assert aligned_sets([1, 1, 2, 3, 4], 2, steps=10) == [
            frozenset({1}),
            frozenset({2, 3}),
            frozenset({4}),
        ]
        assert len(aligned_sets([1, 2, 3, 4], 2, steps=1)) == 1

    def test_monotone_and_bounded(self) -> None:
        """ECR grows with K and never exceeds r."""
        rng = np.random.default_rng(0)
        for _ in range(10):
            probs = rng.dirichlet(np.ones(12), size=4)
            chain = rng.integers(0, 12, size=9).tolist()
            values = [ecr_at_k(probs, chain, r=3, k=k) for k in range(1, 13)]
            assert all(a <= b for a, b in zip(values, values[1:], strict=False))
            assert 0.0 <= values[0] and values[-1] <= 3.0

    @pytest.mark.parametrize(("chain", "k"), [([], 1), ([0], 0), ([0], 7)])
    def test_invalid(self, chain: list[int], k: int) -> None:
        """Empty chains and K outside [1, V] are rejected."""
        with pytest.raises(InvalidArgumentError):
            ecr_at_k(np.full((1, 6), 1 / 6), chain, r=1, k=k)

    def test_summary(self) -> None:
        """Mean, median and share above one."""
        summary = summarize_ecr([0.5, 1.5, 2.0], k=10, r=2)
        assert summary.mean == pytest.approx(4 / 3)
        assert summary.median == pytest.approx(1.5)
        assert summary.above_one == pytest.approx(2 / 3)


class TestPathPosterior:
    """Path posterior, N_eff and Top-2."""

    def test_known_posterior(self) -> None:
        """P = [0.7, 0.3] gives N_eff 1.84202 and Top-2 3/7."""
        result = path_posterior([[0.7, 0.3]], [[0], [1]], r=1)
        np.testing.assert_allclose(result.posterior, [0.7, 0.3], atol=1e-6)
        assert result.n_eff == pytest.approx(1.84202, abs=1e-5)
        assert result.top2 == pytest.approx(3 / 7, abs=1e-5)
        assert n_eff([0.7, 0.3]) == pytest.approx(math.exp(0.610864), abs=1e-5)

    def test_identical_chains(self) -> None:
        """Identical chains share the posterior evenly."""
        probs = np.random.default_rng(1).dirichlet(np.ones(8), size=3)
        result = path_posterior(probs, [[1, 2, 3]] * 3, r=1)
        np.testing.assert_allclose(result.posterior, [1 / 3] * 3)
        assert result.n_eff == pytest.approx(3.0)
        assert result.top2 == pytest.approx(1.0)

    def test_concentration(self) -> None:
        """One supported chain takes the whole posterior."""
        result = path_posterior([[1.0, 0.0, 0.0]], [[0], [1], [2]], r=1)
        assert result.n_eff == pytest.approx(1.0, abs=1e-5)
        assert result.top2 < 1e-6

    def test_temperature_flattens(self) -> None:
        """A larger tau raises N_eff."""
        probs = [[0.7, 0.3]]
        sharp = path_posterior(probs, [[0], [1]], r=1, tau=0.5)
        flat = path_posterior(probs, [[0], [1]], r=1, tau=4.0)
        assert sharp.n_eff < flat.n_eff <= 2.0

    def test_per_step_view(self) -> None:
        """Chains drop out of the per-step posterior once their windows end."""
        probs = [[0.25, 0.25, 0.25, 0.25], [0.25, 0.25, 0.25, 0.25]]
        result = path_posterior(probs, [[0, 1, 2, 3], [0, 1]], r=2)
        assert result.aligned_steps == [2, 1]
        np.testing.assert_allclose(result.step_posterior[0], [0.5, 0.5])
        np.testing.assert_allclose(result.step_posterior[1], [1.0, 0.0])
        assert result.step_n_eff[1] == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"chains": [[0]]},
            {"chains": [[0], [1]], "tau": 0.0},
            {"chains": [[0], [1]], "eps": 0.0},
        ],
    )
    def test_invalid(self, kwargs: dict) -> None:
        """M >= 2, tau > 0 and eps > 0 are required."""
        with pytest.raises(InvalidArgumentError):
            path_posterior([[0.5, 0.5]], r=1, **kwargs)

    def test_summary(self) -> None:
        """Median N_eff and the share above the threshold."""
        posteriors = [
            path_posterior([[0.7, 0.3]], [[0], [1]], r=1),
            path_posterior([[0.5, 0.5]], [[0], [1]], r=1),
            path_posterior([[1.0, 0.0]], [[0], [1]], r=1),
        ]
        summary = summarize_neff(posteriors, k=100, tau=1.0)
        assert summary.median_n_eff == pytest.approx(1.84202, abs=1e-5)
        assert summary.above_threshold == pytest.approx(2 / 3)


class TestSpectral:
    """Effective rank."""

    @pytest.mark.parametrize(
        ("matrix", "expected"),
        [
            (np.diag([2.0, 1.0, 1.0]), 2.82843),
            (np.outer([1.0, 2.0], [3.0, 1.0, 2.0]), 1.0),
            (np.eye(4), 4.0),
        ],
    )
    def test_effective_rank(self, matrix: np.ndarray, expected: float) -> None:
        """exp of the singular-value entropy."""
        assert effective_rank(matrix) == pytest.approx(expected, abs=1e-5)

    def test_bounded_by_rank(self) -> None:
        """Effective rank never exceeds min(dims)."""
        matrix = np.random.default_rng(2).normal(size=(6, 4))
        assert 1.0 <= effective_rank(matrix) <= 4.0

    def test_zero_matrix(self) -> None:
        """The all-zero matrix has no effective rank."""
        with pytest.raises(InvalidArgumentError):
            effective_rank(np.zeros((3, 3)))

    def test_normalized_spectrum(self) -> None:
        """Spectra are scaled by the largest singular value."""
        assert normalized_spectrum(np.diag([4.0, 2.0])) == pytest.approx([1.0, 0.5])


class TestDistances:
    """FID, MMD and cosine sampling."""

    @pytest.fixture
    def points(self) -> np.ndarray:
        """300 Gaussian points in 3-D."""
        return np.random.default_rng(3).normal(size=(300, 3))

    def test_fid_self(self, points: np.ndarray) -> None:
        """A set has zero distance to itself."""
        assert fid(points, points) == pytest.approx(0.0, abs=1e-6)

    def test_fid_offset(self) -> None:
        """A unit shift of a 1-D sample costs exactly one."""
        a = np.random.default_rng(4).normal(size=(500, 1))
        assert fid(a, a + 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_fid_few_points(self) -> None:
        """n <= d is regularized, not singular."""
        a = np.random.default_rng(5).normal(size=(2, 4))
        assert math.isfinite(fid(a, a + 0.5))

    def test_mmd_self(self, points: np.ndarray) -> None:
        """MMD of a set with itself is zero."""
        assert mmd2(points, points) == pytest.approx(0.0, abs=1e-12)

    def test_mmd_detects_shift(self, points: np.ndarray) -> None:
        """Shifted samples have positive MMD."""
        assert mmd2(points, points + 2.0) > 0.1

    def test_bandwidth_fallback(self) -> None:
        """Identical points fall back to a unit bandwidth."""
        same = np.ones((3, 2))
        assert median_bandwidth(same, same) == 1.0

    def test_dimension_mismatch(self) -> None:
        """Mismatched dimensions and non-positive bandwidths are rejected."""
        with pytest.raises(InvalidArgumentError):
            fid(np.zeros((3, 2)), np.zeros((3, 3)))
        with pytest.raises(InvalidArgumentError):
            mmd2(np.zeros((3, 2)), np.zeros((3, 2)), bandwidth=0.0)

    def test_mean_cosine(self) -> None:
        """Parallel rows have cosine one."""
        a = np.array([[1.0, 0.0], [2.0, 0.0]])
        value = mean_cosine(a, a, 20, np.random.default_rng(0), distinct=True)
        assert value == pytest.approx(1.0)


class TestPrelim:
    """Hidden states versus embeddings."""

    def test_report(self, tmp_path: Path) -> None:
        """The report is finite and the scatter file has one row per point."""
        tokenizer = Tokenizer()
        config = ModelConfig(vocab_size=tokenizer.vocab_size, d_model=16, n_layers=1, n_heads=2)
        params = init_params(config, seed=0)
        examples = []
        for seed in range(4):
            problem = gen_problem(seed, 2)
            examples.append(
                segment_example(tokenizer, problem.question, problem.chain, problem.answer, 2)
            )
        report, hidden, embedding = hidden_vs_embedding_report(params, examples, pairs=200)
        assert report.rank_limit == 16
        assert embedding.shape == (tokenizer.vocab_size, 16)
        assert report.fid_self == pytest.approx(0.0, abs=1e-6)
        assert report.mmd2_self == pytest.approx(0.0, abs=1e-9)
        assert report.fid > report.fid_self
        assert 1.0 <= report.effective_rank_embedding <= 16.0
        assert report.hidden.count == hidden.shape[0]

        rows = write_scatter(tmp_path / "scatter.csv", hidden, embedding)
        with (tmp_path / "scatter.csv").open(newline="") as f:
            lines = list(csv.reader(f))
        assert lines[0] == ["source", "x", "y"]
        assert len(lines) - 1 == rows == hidden.shape[0] + embedding.shape[0]
