"""Tests for latentsft.training."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from latentsft.exceptions.errors import (
    CapacityError,
    DivergenceError,
    InvalidArgumentError,
    MissingLabelsError,
)
from latentsft.models.config import Settings, merge, preset
from latentsft.models.data import Problem
from latentsft.numerics.tensor import Tensor
from latentsft.synthdata.generator import gen_problem
from latentsft.synthdata.tokenizer import Tokenizer
from latentsft.training import (
    LabelCache,
    OptimizerConfig,
    OptimizerState,
    optimizer_step,
    train_cot_sft,
    train_stage1,
    train_stage2,
)
from latentsft.training.cot import cot_loss
from latentsft.training.examples import prepare_examples
from latentsft.training.loop import LoopSpec, batch_indices, run_loop
from latentsft.training.runs import RunDirectory
from latentsft.training.stage1 import DECODER, ENCODER, phase_bounds
from latentsft.transformer.params import EMBEDDING, ModelParams, init_params


def smoke(**train: Any) -> Settings:
    """Smoke preset with train overrides."""
    return Settings.load(overrides=merge(preset("smoke"), {"train": train}))


@pytest.fixture
def problems() -> list[Problem]:
    """Six short problems."""
    return [gen_problem(seed, 2) for seed in range(6)]


def leaf(values: list[float]) -> Tensor:
    """Trainable float64 leaf."""
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


class TestOptimizer:
    """AdamW behavior."""

    def test_zero_gradient_is_a_no_op(self) -> None:
        """Zero gradients without decay leave parameters unchanged."""
        x = leaf([1.0, -2.0])
        config = OptimizerConfig(lr=0.1)
        applied = optimizer_step({"x": x}, {"x": np.zeros(2)}, config, OptimizerState())
        assert applied
        np.testing.assert_array_equal(x.data, [1.0, -2.0])

    def test_quadratic_bowl(self) -> None:
        """Minimizing ||x||^2 converges within 1e-3 in 500 steps."""
        x = leaf([1.0, -2.0, 0.5])
        config = OptimizerConfig(lr=0.02, beta2=0.999)
        state = OptimizerState()
        for _ in range(500):
            optimizer_step({"x": x}, {"x": 2.0 * x.data}, config, state)
        assert np.abs(x.data).max() < 1e-3
        assert state.counts["x"] == 500

    def test_non_finite_gradient_is_skipped(self) -> None:
        """A NaN gradient skips the step and counts an anomaly."""
        x = leaf([1.0, 2.0])
        state = OptimizerState()
        grads = {"x": np.array([np.nan, 0.0])}
        applied = optimizer_step({"x": x}, grads, OptimizerConfig(lr=0.1), state)
        assert not applied
        assert state.anomalies == 1
        np.testing.assert_array_equal(x.data, [1.0, 2.0])
        assert "x" not in state.m

    def test_clipping_scales_moments(self) -> None:
        """The clipped gradient feeds the first moment."""
        x = leaf([0.0, 0.0])
        state = OptimizerState()
        config = OptimizerConfig(lr=0.1, beta1=0.9, grad_clip=1.0)
        optimizer_step({"x": x}, {"x": np.array([3.0, 4.0])}, config, state)
        np.testing.assert_allclose(state.m["x"], 0.1 * np.array([0.6, 0.8]))

    def test_decay_skips_vectors(self) -> None:
        """Weight decay applies to matrices only."""
        vector = leaf([1.0, 1.0])
        matrix = Tensor(np.ones((2, 2)), requires_grad=True)
        config = OptimizerConfig(lr=0.1, weight_decay=0.5)
        optimizer_step(
            {"v": vector, "m": matrix},
            {"v": np.zeros(2), "m": np.zeros((2, 2))},
            config,
            OptimizerState(),
        )
        np.testing.assert_array_equal(vector.data, [1.0, 1.0])
        np.testing.assert_allclose(matrix.data, np.full((2, 2), 0.95))

    def test_unknown_gradient(self) -> None:
        """Gradients must name a parameter."""
        with pytest.raises(InvalidArgumentError):
            optimizer_step({}, {"x": np.zeros(1)}, OptimizerConfig(lr=0.1), OptimizerState())

    def test_reproducible_trajectory(self) -> None:
        """Two runs with the same inputs are bit-identical."""

        def trajectory() -> np.ndarray:
            x = leaf([0.3, -0.7])
            state = OptimizerState()
            rng = np.random.default_rng(0)
            for _ in range(20):
                optimizer_step({"x": x}, {"x": rng.normal(size=2)}, OptimizerConfig(lr=0.05), state)
            return x.data

        np.testing.assert_array_equal(trajectory(), trajectory())


class TestLoop:
    """Shared optimization loop."""

    def test_batch_indices(self) -> None:
        """Batches are a pure function of seed and step."""
        assert batch_indices(1, 5, 10, 4) == batch_indices(1, 5, 10, 4)
        assert len(set(batch_indices(1, 5, 10, 4))) == 4
        assert sorted(batch_indices(1, 0, 3, 8)) == [0, 1, 2]

    def test_divergence(self) -> None:
        """A non-finite loss aborts with a diagnostic."""
        settings = smoke()
        params = init_params(settings.model, 0)

        def loss_fn(groups: dict[str, ModelParams], shard: Any) -> tuple[Tensor, dict[str, float]]:
            return groups["model"].embedding.sum() * float("nan"), {}

        plan = LoopSpec("cot", "cot", 0, 2, 0, 2, 4, 1, 100, progress=False)
        with pytest.raises(DivergenceError, match="step 0"):
            run_loop(plan, {"model": params}, loss_fn, OptimizerConfig(lr=0.1), OptimizerState())


class TestExamples:
    """Example preparation."""

    def test_capacity(self, problems: list[Problem]) -> None:
        """Examples longer than the context are refused."""
        with pytest.raises(CapacityError):
            prepare_examples(problems, Tokenizer(), 2, context_length=8)

    def test_empty(self) -> None:
        """An empty dataset is an error."""
        with pytest.raises(InvalidArgumentError):
            prepare_examples([], Tokenizer(), 2, context_length=96)


class TestCoT:
    """Explicit chain-of-thought training."""

    def test_deterministic(self, problems: list[Problem]) -> None:
        """Same settings and seed give the same losses and parameters."""
        first, history_a = train_cot_sft(smoke(), problems, progress=False)
        second, history_b = train_cot_sft(smoke(), problems, progress=False)
        assert [r.loss for r in history_a] == pytest.approx([r.loss for r in history_b], abs=1e-6)
        assert first.checksum() == second.checksum()
        assert len(history_a) == 4

    def test_threads_match_serial_loss(self, problems: list[Problem]) -> None:
        """Sharding across threads keeps the batch loss."""
        serial = Settings.load(overrides=merge(preset("smoke"), {"threads": 1}))
        threaded = Settings.load(overrides=merge(preset("smoke"), {"threads": 2}))
        _, a = train_cot_sft(serial, problems, progress=False)
        _, b = train_cot_sft(threaded, problems, progress=False)
        assert a[0].loss == pytest.approx(b[0].loss, rel=1e-5)

    def test_resume_matches_uninterrupted(self, tmp_path: Path, problems: list[Problem]) -> None:
        """Stopping at step 2 and resuming reproduces the four-step run."""
        full, _ = train_cot_sft(smoke(), problems, progress=False)
        with RunDirectory(tmp_path / "run", "cot") as run:
            train_cot_sft(smoke(steps_cot=2), problems, run=run, progress=False)
        with RunDirectory(tmp_path / "run", "cot") as run:
            resumed, history = train_cot_sft(
                smoke(), problems, run=run, resume=True, progress=False
            )
            rows = run.read_metrics()
        assert [r.step for r in history] == [2, 3]
        assert [int(row["step"]) for row in rows] == [1, 2, 3, 4]
        assert resumed.checksum() == full.checksum()

    @pytest.mark.slow
    def test_memorizes_one_example(self) -> None:
        """A single example is fit to near-zero loss."""
        overrides = {
            "model": {"d_model": 32},
            "train": {"steps_cot": 400, "lr_cot": 1e-2, "weight_decay": 0.0, "batch_size": 1},
        }
        settings = Settings.load(overrides=merge(preset("smoke"), overrides))
        problem = [gen_problem(1, 2)]
        params, history = train_cot_sft(settings, problem, progress=False)
        examples = prepare_examples(problem, Tokenizer(), 2, settings.model.context_length)
        assert history[-1].loss < 0.05
        assert cot_loss(params, examples).item() < 0.05


class TestStage1:
    """Alternating stage-1 training."""

    def test_phase_bounds(self) -> None:
        """Phases occupy consecutive step ranges."""
        assert phase_bounds(smoke().train) == [
            ("encoder_only", 0, 2),
            ("decoder_only", 2, 4),
            ("joint", 4, 6),
        ]

    def test_zero_budget(self, problems: list[Problem]) -> None:
        """All-zero phase budgets are rejected."""
        settings = smoke(steps_phase_a=0, steps_phase_b=0, steps_phase_c=0)
        with pytest.raises(InvalidArgumentError):
            train_stage1(settings, problems, init_params(settings.model, 0), progress=False)

    def test_encoder_phase_freezes_decoder(self, problems: list[Problem]) -> None:
        """Phase A updates only the encoder and never touches embeddings."""
        settings = smoke(steps_phase_b=0, steps_phase_c=0)
        init = init_params(settings.model, 0)
        state, cache, history = train_stage1(settings, problems, init, progress=False)
        assert len(history) == 2
        assert state.decoder.checksum() == init.checksum()
        assert state.encoder.checksum() != init.checksum()
        np.testing.assert_array_equal(state.encoder[EMBEDDING].data, init[EMBEDDING].data)
        assert set(state.phase_losses) == {"encoder_only"}
        assert len(cache) == len(problems)

    def test_label_cache(self, tmp_path: Path, problems: list[Problem]) -> None:
        """Labels hold one alpha and z per segment and survive a save."""
        settings = smoke()
        with RunDirectory(tmp_path, "stage1") as run:
            _, cache, _ = train_stage1(
                settings, problems, init_params(settings.model, 0), run=run, progress=False
            )
        examples = prepare_examples(problems, Tokenizer(), 2, 96)
        alphas, latents = cache.get(examples[0].id)
        assert alphas.shape == (examples[0].n_segments, settings.model.vocab)
        assert latents.shape == (examples[0].n_segments, settings.model.d_model)
        np.testing.assert_allclose(alphas.sum(axis=1), 1.0, rtol=1e-5)
        loaded = LabelCache.load(tmp_path / "latents.npz")
        np.testing.assert_array_equal(loaded.get(examples[0].id)[1], latents)
        assert (tmp_path / "final" / "encoder" / "manifest.json").exists()

    def test_resume_restores_phase_losses(self, tmp_path: Path, problems: list[Problem]) -> None:
        """Resuming after phases A and B reproduces the losses and weights of a full run."""
        init = init_params(smoke().model, 0)
        full, _, _ = train_stage1(smoke(), problems, init, progress=False)
        with RunDirectory(tmp_path / "run", "stage1") as run:
            train_stage1(smoke(steps_phase_c=0), problems, init, run=run, progress=False)
        with RunDirectory(tmp_path / "run", "stage1") as run:
            resumed, _, history = train_stage1(
                smoke(), problems, init, run=run, resume=True, progress=False
            )
        assert [r.step for r in history] == [4, 5]
        assert set(resumed.phase_losses) == {"encoder_only", "decoder_only", "joint"}
        for phase, loss in full.phase_losses.items():
            assert resumed.phase_losses[phase] == pytest.approx(loss, abs=1e-6)
        assert resumed.encoder.checksum() == full.encoder.checksum()
        assert resumed.decoder.checksum() == full.decoder.checksum()

    def test_checkpoints_carry_phase_losses(
        self, tmp_path: Path, problems: list[Problem]
    ) -> None:
        """Periodic checkpoints store the losses of every finished phase."""
        settings = smoke(steps_phase_c=0)
        init = init_params(settings.model, 0)
        with RunDirectory(tmp_path, "stage1") as run:
            train_stage1(settings, problems, init, run=run, progress=False)
            restored = run.resume([ENCODER, DECODER], OptimizerState())
        assert restored is not None
        assert restored.step == 4
        assert set(restored.metadata["phase_losses"]) == {"encoder_only", "decoder_only"}

    def test_missing_label(self) -> None:
        """Unknown example ids raise."""
        with pytest.raises(MissingLabelsError):
            LabelCache().get("p0")


class TestStage2:
    """Stage-2 distillation training."""

    def test_trains_with_frozen_embedding(self, problems: list[Problem]) -> None:
        """Stage 2 updates the decoder but not E."""
        settings = smoke()
        init = init_params(settings.model, 0)
        state, cache, _ = train_stage1(settings, problems, init, progress=False)
        params, history = train_stage2(settings, problems, cache, state.decoder, progress=False)
        assert len(history) == 4
        assert {"kl", "ce"} <= set(history[0].parts)
        assert params.checksum() != state.decoder.checksum()
        np.testing.assert_array_equal(params[EMBEDDING].data, state.decoder[EMBEDDING].data)

    def test_missing_labels(self, problems: list[Problem]) -> None:
        """Every problem needs cached labels."""
        settings = smoke()
        with pytest.raises(MissingLabelsError):
            init = init_params(settings.model, 0)
            train_stage2(settings, problems, LabelCache(), init, progress=False)
