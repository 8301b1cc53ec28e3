"""Explicit chain-of-thought fine-tuning (the CoT-SFT baseline and initializer)."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from latentsft import get_logger
from latentsft.numerics import functional as F
from latentsft.numerics.tensor import Tensor, lift
from latentsft.segmask import cot_layout
from latentsft.synthdata.tokenizer import Tokenizer
from latentsft.training.examples import prepare_examples
from latentsft.training.loop import LoopSpec, StepResult, run_loop
from latentsft.training.optimizer import OptimizerConfig, OptimizerState
from latentsft.training.runs import FINAL
from latentsft.transformer.forward import SequenceInput, forward_batch
from latentsft.transformer.masking import AttentionMask
from latentsft.transformer.params import ModelParams, init_params

if TYPE_CHECKING:
    from collections.abc import Sequence

    from latentsft.models.config import Settings
    from latentsft.models.data import Problem
    from latentsft.segmask import SegmentedExample
    from latentsft.training.runs import RunDirectory

log = get_logger(__name__)

GROUP = "model"


def cot_targets(example: SegmentedExample) -> tuple[list[int], list[int], list[int]]:
    """Token ids, predictor positions and targets of ``[Q, <think>, chain, </think>, Answer]``.

    Every token after ``<think>`` is a target; question positions are not.
    """
    layout = cot_layout(example)
    tokens = [int(t) for t in layout.tokens]  # type: ignore[arg-type]
    first = layout.positions("think_open")[0] + 1
    positions = list(range(first, len(tokens)))
    return tokens, [p - 1 for p in positions], [tokens[p] for p in positions]


def cot_loss(params: ModelParams, examples: Sequence[SegmentedExample]) -> Tensor:
    """Mean over examples of the per-token cross-entropy on chain and answer tokens."""
    inputs, masks, rows, cols, targets, weights = [], [], [], [], [], []
    for row, example in enumerate(examples):
        tokens, predictors, labels = cot_targets(example)
        inputs.append(SequenceInput.from_tokens(tokens))
        masks.append(AttentionMask.causal(len(tokens)))
        rows.extend([row] * len(labels))
        cols.extend(predictors)
        targets.extend(labels)
        weights.extend([1.0 / (len(labels) * len(examples))] * len(labels))
    logits = forward_batch(params, inputs, masks).logits
    nll = F.nll_from_logits(logits[np.asarray(rows), np.asarray(cols)], targets)
    return (nll * lift(np.asarray(weights), nll.dtype)).sum()


def train_cot_sft(
    settings: Settings,
    problems: Sequence[Problem],
    run: RunDirectory | None = None,
    resume: bool = False,
    progress: bool = True,
) -> tuple[ModelParams, list[StepResult]]:
    """Causal-LM training on explicit chains.

    Args:
        settings (Settings): Model, data and train settings.
        problems (Sequence[Problem]): Training problems.
        run (RunDirectory | None): Receives metrics and checkpoints.
        resume (bool): Continue from the newest checkpoint of ``run``.
        progress (bool): Show a progress bar.

    Raises:
        InvalidArgumentError: If ``problems`` is empty.
        DivergenceError: If the loss becomes non-finite.

    Returns:
        tuple[ModelParams, list[StepResult]]: Trained parameters and the
        step history.
    """
    train = settings.train
    tokenizer = Tokenizer(settings.data.alphabet)
    examples = prepare_examples(problems, tokenizer, train.ratio, settings.model.context_length)
    params = init_params(settings.model, train.seed)
    state = OptimizerState()
    start = 0
    if resume and run is not None:
        restored = run.resume([GROUP], state)
        if restored is not None:
            params, start = restored.groups[GROUP], restored.step

    def loss_fn(
        groups: dict[str, ModelParams], shard: Sequence[int]
    ) -> tuple[Tensor, dict[str, float]]:
        loss = cot_loss(groups[GROUP], [examples[i] for i in shard])
        return loss, {"ce": loss.item()}

    plan = LoopSpec(
        stage="cot",
        phase="cot",
        start=start,
        stop=train.steps_cot,
        seed=train.seed,
        batch_size=train.batch_size,
        n_examples=len(examples),
        log_every=train.log_every,
        checkpoint_every=train.checkpoint_every,
        threads=settings.threads,
        progress=progress,
    )
    history = run_loop(
        plan, {GROUP: params}, loss_fn, OptimizerConfig.from_train(train, train.lr_cot), state, run
    )
    if run is not None:
        run.save(FINAL, {GROUP: params}, train.seed, train.steps_cot)
    return params, history
