"""Tests for latentsft.latent."""

from __future__ import annotations

import math

import numpy as np
import pytest

from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.latent import (
    SlotAssignment,
    distillation_temperature_transform,
    encode_latents,
    layout_input,
    soft_embed,
    stage1_sup_loss,
    stage1_terms,
    stage2_assignment,
    stage2_auto_loss,
    stage2_loss_parts,
)
from latentsft.models.config import ModelConfig
from latentsft.numerics.gradcheck import gradient_check_parameters
from latentsft.numerics.tensor import Tensor
from latentsft.segmask import SegmentedExample, build_ltsum, decoder_layout
from latentsft.transformer.forward import forward
from latentsft.transformer.masking import AttentionMask
from latentsft.transformer.params import ModelParams, init_params


def toy(vocab: int = 50, width: int = 32, seed: int = 0) -> ModelParams:
    """Two-layer float64 model."""
    config = ModelConfig(
        vocab_size=vocab,
        d_model=width,
        n_layers=2,
        n_heads=2 if width % 2 == 0 else 1,
        context_length=32,
        dtype="float64",
    )
    return init_params(config, seed)


@pytest.fixture
def example() -> SegmentedExample:
    """Two segments over a 50-token vocabulary."""
    return SegmentedExample(
        question=(5, 6),
        segments=((10, 11), (12,)),
        answer=(20, 1),
        think_open=2,
        think_close=3,
        latent=4,
        id="ex",
    )


class TestSoftEmbed:
    """Latent token construction."""

    @pytest.fixture
    def identity(self) -> ModelParams:
        """d = V = 3 with E = I."""
        params = toy(vocab=3, width=3)
        params.embedding.data[...] = np.eye(3)
        return params

    def test_identity_embedding(self, identity: ModelParams) -> None:
        """With E = I the latent vector equals alpha."""
        token = soft_embed(np.log([0.5, 0.3, 0.2]), identity)
        np.testing.assert_allclose(token.alpha.data, [0.5, 0.3, 0.2])
        np.testing.assert_allclose(token.z.data, [0.5, 0.3, 0.2])

    def test_top_k_pruning(self, identity: ModelParams) -> None:
        """Pruning keeps the k largest weights and renormalizes."""
        token = soft_embed(np.log([0.5, 0.3, 0.2]), identity, top_k=2)
        np.testing.assert_allclose(token.alpha.data, [0.625, 0.375, 0.0])

    def test_top_one_is_a_vertex(self) -> None:
        """top_k = 1 returns an embedding column exactly."""
        params = toy()
        h = np.random.default_rng(1).normal(size=32)
        token = soft_embed(h, params, top_k=1)
        vertex = int(np.argmax(token.alpha.data))
        np.testing.assert_array_equal(token.z.data, params.embedding.data[:, vertex])

    def test_reconstruction(self) -> None:
        """z lies in the column span of E."""
        params = toy()
        token = soft_embed(np.random.default_rng(2).normal(size=32), params, temperature=0.5)
        assert token.reconstruction_error(params.embedding.data) < 1e-6
        assert token.probs.probs.sum() == pytest.approx(1.0)

    def test_hidden_state_ablation(self) -> None:
        """The ablation feeds back the raw hidden state."""
        params = toy()
        h = np.random.default_rng(3).normal(size=32)
        token = soft_embed(h, params, hidden_state=True)
        np.testing.assert_array_equal(token.z.data, h)

    @pytest.mark.parametrize("top_k", [0, 51])
    def test_top_k_range(self, top_k: int) -> None:
        """top_k must lie in [1, V]."""
        with pytest.raises(InvalidArgumentError):
            soft_embed(np.zeros(32), toy(), top_k=top_k)

    def test_encoder_emits_one_token_per_segment(self, example: SegmentedExample) -> None:
        """encode_latents reads one slot per segment."""
        latents = encode_latents(toy(), [example, example])
        assert [len(tokens) for tokens in latents] == [2, 2]
        assert latents[0][1].z.shape == (32,)


class TestStage1:
    """Stage-1 supervised loss."""

    def test_uniform_decoder(self) -> None:
        """A decoder with zero embeddings predicts uniformly, giving ln V."""
        small = SegmentedExample((0,), ((1,), (0, 1)), (1,), 2, 3, 0)
        encoder = toy(vocab=4, width=4)
        decoder = toy(vocab=4, width=4)
        decoder.embedding.data[...] = 0.0
        latents = encode_latents(encoder, [small])[0]
        assert stage1_sup_loss(latents, small, decoder).item() == pytest.approx(math.log(4.0))

    def test_matches_brute_force(self, example: SegmentedExample) -> None:
        """The loss equals the explicit double sum over steps and suffix tokens."""
        encoder, decoder = toy(seed=1), toy(seed=2)
        latents = encode_latents(encoder, [example])[0]
        zs = [t.z.data for t in latents]
        n = example.n_segments
        prefix = len(example.question) + 1
        total = 0.0
        for step in range(1, n + 1):
            layout = decoder_layout(example, step)
            sequence = layout_input(layout, zs)
            logits = forward(decoder, sequence, build_ltsum(layout, step)).logits.data
            suffix = [t for segment in example.segments[step:] for t in segment]
            suffix += [example.think_close, *example.answer]
            start = prefix + n
            terms = []
            for j, target in enumerate(suffix):
                row = prefix + step - 1 if j == 0 else start + j - 1
                shifted = logits[row] - logits[row].max()
                terms.append(-(shifted[target] - math.log(np.exp(shifted).sum())))
            total += sum(terms) / len(terms)
        expected = total / n
        loss = stage1_sup_loss(latents, example, decoder).item()
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_predictor_target_pairs(self) -> None:
        """Y_i starts at z_i's slot and each later token is read off the previous one."""
        three = SegmentedExample(
            question=(5, 6),
            segments=((10, 11), (12, 13), (14,)),
            answer=(20, 1),
            think_open=2,
            think_close=3,
            latent=4,
            id="three",
        )
        latents = encode_latents(toy(), [three])[0]
        pairs = [
            list(zip(predictors, targets, strict=True))
            for _, _, predictors, targets in stage1_terms(latents, three)
        ]
        # Q at 0-1, <think> at 2, z_1..z_3 at 3-5, then Y_i from 6.
        assert pairs == [
            [(3, 12), (6, 13), (7, 14), (8, 3), (9, 20), (10, 1)],
            [(4, 14), (6, 3), (7, 20), (8, 1)],
            [(5, 3), (6, 20), (7, 1)],
        ]

    def test_count_mismatch(self, example: SegmentedExample) -> None:
        """One latent per segment is required."""
        latents = encode_latents(toy(), [example])[0]
        with pytest.raises(InvalidArgumentError):
            stage1_sup_loss(latents[:1], example, toy())

    def test_no_ltsum_keeps_one_term(self, example: SegmentedExample) -> None:
        """Without LTSuM only the final step is supervised, causally."""
        latents = encode_latents(toy(), [example])[0]
        terms = stage1_terms(latents, example, no_ltsum=True)
        assert len(terms) == 1
        layout, mask, _, targets = terms[0]
        assert mask == AttentionMask.causal(len(layout))
        assert targets == [example.think_close, *example.answer]

    def test_gradient_reaches_encoder(self, example: SegmentedExample) -> None:
        """Finite differences agree with backprop through encoder and decoder."""
        encoder, decoder = toy(seed=1), toy(seed=2)

        def loss() -> Tensor:
            latents = encode_latents(encoder, [example])[0]
            return stage1_sup_loss(latents, example, decoder)

        value = loss()
        value.backward()
        assert np.abs(encoder.embedding.grad).sum() > 0.0
        checked = {
            "encoder.embedding": encoder.embedding,
            "encoder.wq": encoder["layers.0.wq"],
            "decoder.w_out": decoder["layers.1.w_out"],
        }
        assert gradient_check_parameters(loss, checked, tolerance=1e-3).passed


class TestStage2:
    """Stage-2 distillation loss."""

    @staticmethod
    def single_slot(student: list[float], hard: list[float]) -> tuple[Tensor, SlotAssignment]:
        logits = Tensor(np.array([student, hard]))
        assignment = SlotAssignment(
            latent_positions=(0,),
            soft_labels=np.array([[1.0, 0.0]]),
            explicit_positions=(1,),
            hard_labels=(0,),
        )
        return logits, assignment

    def test_single_slot_value(self) -> None:
        """KL([1, 0] || [0.5, 0.5]) plus a perfect explicit prediction is ln 2."""
        logits, assignment = self.single_slot([0.0, 0.0], [40.0, -40.0])
        assert stage2_auto_loss(logits, assignment).item() == pytest.approx(math.log(2.0), abs=1e-9)

    def test_lambda_zero_is_cross_entropy(self) -> None:
        """lam = 0 leaves the mean explicit cross-entropy."""
        logits, assignment = self.single_slot([0.0, 0.0], [0.0, 0.0])
        assert stage2_auto_loss(logits, assignment, lam=0.0).item() == pytest.approx(math.log(2.0))

    def test_matching_student_is_zero(self) -> None:
        """Zero loss when q matches p and explicit tokens are certain."""
        logits, assignment = self.single_slot([40.0, -40.0], [40.0, -40.0])
        total, kl, ce = stage2_loss_parts(logits, assignment)
        assert total.item() == pytest.approx(0.0, abs=1e-9)
        assert kl.item() == pytest.approx(0.0, abs=1e-9)
        assert ce.item() == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize(
        ("latent", "explicit"),
        [((), (1,)), ((0,), ()), ((0,), (0,))],
    )
    def test_invalid_assignment(self, latent: tuple[int, ...], explicit: tuple[int, ...]) -> None:
        """Both position sets must be non-empty and disjoint."""
        with pytest.raises(InvalidArgumentError):
            SlotAssignment(
                latent, np.ones((len(latent), 2)) / 2, explicit, tuple(0 for _ in explicit)
            )

    def test_slot_shift(self) -> None:
        """<think> predicts alpha_1, z_t predicts alpha_{t+1}, z_N predicts </think>."""
        three = SegmentedExample((5, 6), ((10,), (11,), (12,)), (20, 1), 2, 3, 4)
        alphas = np.full((3, 50), 1 / 50)
        layout, assignment = stage2_assignment(three, alphas)
        assert layout.latent_positions == [3, 4, 5]
        assert assignment.latent_positions == (2, 3, 4)
        assert assignment.explicit_positions == (5, 6, 7)
        assert assignment.hard_labels == (3, 20, 1)

    def test_alpha_rows_must_match(self, example: SegmentedExample) -> None:
        """One alpha row per segment."""
        with pytest.raises(InvalidArgumentError):
            stage2_assignment(example, np.full((3, 50), 1 / 50))

    @pytest.mark.parametrize(
        ("temperature", "target", "scale"),
        [(1.0, [0.8, 0.2], 1.0), (2.0, [2 / 3, 1 / 3], 4.0)],
    )
    def test_distillation_temperature(
        self, temperature: float, target: list[float], scale: float
    ) -> None:
        """Target sharpening by p^(1/T) and the T^2 loss scale."""
        p, q, factor = distillation_temperature_transform([0.8, 0.2], [0.0, 0.0], temperature)
        np.testing.assert_allclose(p.probs, target, atol=1e-12)
        np.testing.assert_allclose(q.probs, [0.5, 0.5])
        assert factor == scale

    def test_full_loss_gradient(self, example: SegmentedExample) -> None:
        """The full stage-2 loss on a toy decoder passes finite differences."""
        decoder = toy(seed=5)
        rng = np.random.default_rng(6)
        alphas = rng.dirichlet(np.ones(50), size=example.n_segments)
        layout, assignment = stage2_assignment(example, alphas, label_top_k=10)
        zs = [decoder.embedding.data @ a for a in alphas]

        def loss() -> Tensor:
            logits = forward(
                decoder, layout_input(layout, zs), AttentionMask.causal(len(layout))
            ).logits
            return stage2_auto_loss(logits, assignment, lam=1.0, beta=0.5, temperature=2.0)

        checked = {name: decoder[name] for name in ("embedding", "layers.0.wk", "layers.1.w_in")}
        assert gradient_check_parameters(loss, checked, tolerance=1e-3).passed
