"""Stage 1: latent-token generation with the alternating EM schedule.

Encoder and decoder both start as copies of the CoT-SFT parameters. Phase A
trains only the encoder, phase B only the decoder and phase C both, each on
the supervised decoding loss. The vocabulary embedding stays frozen when
``train.freeze_embeddings`` is set. Afterwards the encoder's ``alpha`` and
``z`` for every training example are cached as stage-2 labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft import get_logger
from latentsft.exceptions.errors import DataFileError, InvalidArgumentError, MissingLabelsError
from latentsft.latent import encode_latents, stage1_sup_loss_batch
from latentsft.numerics.tensor import no_grad
from latentsft.synthdata.tokenizer import Tokenizer
from latentsft.training.examples import prepare_examples
from latentsft.training.loop import LoopSpec, StepResult, run_loop
from latentsft.training.optimizer import OptimizerConfig, OptimizerState
from latentsft.training.runs import FINAL
from latentsft.transformer.params import EMBEDDING

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from latentsft.models.config import Settings, TrainConfig
    from latentsft.models.data import Problem
    from latentsft.models.types import Phase
    from latentsft.numerics.tensor import Tensor
    from latentsft.segmask import SegmentedExample
    from latentsft.training.runs import RunDirectory
    from latentsft.transformer.params import ModelParams

log = get_logger(__name__)

ENCODER = "encoder"
DECODER = "decoder"
LABELS_FILE = "latents.npz"
PHASES: tuple[Phase, ...] = ("encoder_only", "decoder_only", "joint")
# Examples used for the end-of-phase loss readout.
EVAL_EXAMPLES = 64


@dataclass
class LabelCache:
    """Per-example ``alpha_1..alpha_N`` (``(N, V)``) and ``z_1..z_N`` (``(N, d)``)."""

    alphas: dict[str, NDArray[Any]] = field(default_factory=dict)
    latents: dict[str, NDArray[Any]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.alphas)

    def __contains__(self, example_id: object) -> bool:
        return example_id in self.alphas and example_id in self.latents

    def get(self, example_id: str) -> tuple[NDArray[Any], NDArray[Any]]:
        """Labels of one example.

        Raises:
            MissingLabelsError: If the example has no cached labels.
        """
        if example_id not in self:
            raise MissingLabelsError(example_id)
        return self.alphas[example_id], self.latents[example_id]

    def save(self, path: Path) -> Path:
        """Write a compressed ``.npz`` with keys ``<id>/alpha`` and ``<id>/z``."""
        arrays = {f"{key}/alpha": value for key, value in self.alphas.items()}
        arrays.update({f"{key}/z": value for key, value in self.latents.items()})
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            np.savez_compressed(f, **arrays)
        return path

    @classmethod
    def load(cls, path: Path) -> LabelCache:
        """Inverse of ``save``.

        Raises:
            DataFileError: If ``path`` does not exist.
        """
        if not path.exists():
            raise DataFileError(path)
        cache = cls()
        with np.load(path) as data:
            for key in data.files:
                example_id, _, kind = key.rpartition("/")
                target = cache.alphas if kind == "alpha" else cache.latents
                target[example_id] = data[key]
        return cache


@dataclass
class EMState:
    """Progress of the alternating schedule."""

    encoder: ModelParams
    decoder: ModelParams
    phase: Phase = "encoder_only"
    step: int = 0
    phase_losses: dict[str, float] = field(default_factory=dict)

    def activate(self, phase: Phase, freeze_embeddings: bool) -> None:
        """Make exactly the components of ``phase`` trainable."""
        frozen = [EMBEDDING] if freeze_embeddings else []
        self.phase = phase
        self.encoder.set_trainable(phase in {"encoder_only", "joint"}, exclude=frozen)
        self.decoder.set_trainable(phase in {"decoder_only", "joint"}, exclude=frozen)

    @property
    def groups(self) -> dict[str, ModelParams]:
        """Both components keyed by group name."""
        return {ENCODER: self.encoder, DECODER: self.decoder}


def phase_bounds(config: TrainConfig) -> list[tuple[Phase, int, int]]:
    """``(phase, first step, stop step)`` of the three phases on a global step axis."""
    bounds = []
    start = 0
    for phase, steps in zip(
        PHASES, (config.steps_phase_a, config.steps_phase_b, config.steps_phase_c), strict=True
    ):
        bounds.append((phase, start, start + steps))
        start += steps
    return bounds


def sup_loss(
    encoder: ModelParams,
    decoder: ModelParams,
    examples: Sequence[SegmentedExample],
    config: TrainConfig,
) -> Tensor:
    """Stage-1 loss of ``examples`` with the configured ablations."""
    latents = encode_latents(
        encoder, examples, config.temperature, config.top_k, config.hidden_state, config.no_ltim
    )
    return stage1_sup_loss_batch(latents, examples, decoder, config.no_ltsum)


def evaluate_sup_loss(
    state: EMState, examples: Sequence[SegmentedExample], config: TrainConfig
) -> float:
    """Mean stage-1 loss over (up to) the first ``EVAL_EXAMPLES`` examples, without gradients."""
    subset = list(examples[:EVAL_EXAMPLES])
    with no_grad():
        return sup_loss(state.encoder, state.decoder, subset, config).item()


def build_label_cache(
    encoder: ModelParams,
    examples: Sequence[SegmentedExample],
    config: TrainConfig,
    batch_size: int = 32,
) -> LabelCache:
    """Final ``alpha`` and ``z`` of every example under the trained encoder."""
    cache = LabelCache()
    with no_grad():
        for start in range(0, len(examples), batch_size):
            batch = examples[start : start + batch_size]
            tokens = encode_latents(
                encoder,
                batch,
                config.temperature,
                config.top_k,
                config.hidden_state,
                config.no_ltim,
            )
            for example, row in zip(batch, tokens, strict=True):
                cache.alphas[example.id] = np.stack([t.alpha.data for t in row])
                cache.latents[example.id] = np.stack([t.z.data for t in row])
    return cache


def train_stage1(
    settings: Settings,
    problems: Sequence[Problem],
    init: ModelParams,
    run: RunDirectory | None = None,
    resume: bool = False,
    progress: bool = True,
) -> tuple[EMState, LabelCache, list[StepResult]]:
    """Run phases A, B and C, then cache stage-2 labels.

    Args:
        settings (Settings): Run settings.
        problems (Sequence[Problem]): Training problems.
        init (ModelParams): CoT-SFT parameters; copied into both components.
        run (RunDirectory | None): Receives metrics, checkpoints and labels.
        resume (bool): Continue from the newest checkpoint of ``run``.
        progress (bool): Show progress bars.

    Raises:
        InvalidArgumentError: If every phase budget is zero.

    Returns:
        tuple[EMState, LabelCache, list[StepResult]]: Final state, labels and
        the step history.
    """
    train = settings.train
    if train.stage1_steps == 0:
        raise InvalidArgumentError("train", "all stage-1 phase budgets are zero")
    tokenizer = Tokenizer(settings.data.alphabet)
    examples = prepare_examples(problems, tokenizer, train.ratio, settings.model.context_length)
    state = EMState(encoder=init.copy(), decoder=init.copy())
    optimizer = OptimizerState()
    start = 0
    if resume and run is not None:
        restored = run.resume([ENCODER, DECODER], optimizer)
        if restored is not None:
            state.encoder = restored.groups[ENCODER]
            state.decoder = restored.groups[DECODER]
            start = restored.step
            state.phase_losses = dict(restored.metadata.get("phase_losses", {}))

    def loss_fn(
        groups: dict[str, ModelParams], shard: Sequence[int]
    ) -> tuple[Tensor, dict[str, float]]:
        loss = sup_loss(groups[ENCODER], groups[DECODER], [examples[i] for i in shard], train)
        return loss, {"ce": loss.item()}

    history: list[StepResult] = []
    config = OptimizerConfig.from_train(train, train.lr_stage1)
    for phase, first, stop in phase_bounds(train):
        if stop <= start or stop == first:
            continue
        state.activate(phase, train.freeze_embeddings)
        log.info("Stage 1 phase %s: steps %d-%d", phase, max(first, start), stop)
        plan = LoopSpec(
            stage="stage1",
            phase=phase,
            start=max(first, start),
            stop=stop,
            seed=train.seed,
            batch_size=train.stage1_batch_size,
            n_examples=len(examples),
            log_every=train.log_every,
            checkpoint_every=train.checkpoint_every,
            threads=settings.threads,
            progress=progress,
            metadata={"phase_losses": state.phase_losses},
        )
        history.extend(run_loop(plan, state.groups, loss_fn, config, optimizer, run))
        state.step = stop
        state.phase_losses[phase] = evaluate_sup_loss(state, examples, train)
        log.info("Stage 1 loss after %s: %.5f", phase, state.phase_losses[phase])
        if run is not None:
            # Phase boundary: rewrite with the loss of the phase just finished.
            run.save(
                run.checkpoint_tag(stop),
                state.groups,
                train.seed,
                stop,
                optimizer,
                {"phase": phase, "phase_losses": state.phase_losses},
            )

    cache = build_label_cache(state.encoder, examples, train)
    if run is not None:
        run.save(
            FINAL,
            state.groups,
            train.seed,
            state.step,
            metadata={"phase_losses": state.phase_losses},
        )
        cache.save(run.path / LABELS_FILE)
    return state, cache, history
