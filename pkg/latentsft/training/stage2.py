"""Stage 2: autonomous latent generation.

The decoder reads ``[Q, <think>, z_1..z_N, </think>, Answer]`` with the
cached stage-1 latents as forced inputs under a causal mask, and
learns to predict each next ``alpha`` (KL), ``</think>`` after ``z_N`` and
the answer (CE).
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from latentsft import get_logger
from latentsft.latent import layout_input, stage2_assignment, stage2_loss_parts
from latentsft.synthdata.tokenizer import Tokenizer
from latentsft.training.examples import prepare_examples
from latentsft.training.loop import LoopSpec, StepResult, run_loop
from latentsft.training.optimizer import OptimizerConfig, OptimizerState
from latentsft.training.runs import FINAL
from latentsft.transformer.forward import forward_batch
from latentsft.transformer.masking import AttentionMask
from latentsft.transformer.params import EMBEDDING

if TYPE_CHECKING:
    from collections.abc import Sequence

    from latentsft.models.config import Settings
    from latentsft.models.data import Problem
    from latentsft.numerics.tensor import Tensor
    from latentsft.training.runs import RunDirectory
    from latentsft.training.stage1 import LabelCache
    from latentsft.transformer.params import ModelParams

log = get_logger(__name__)

GROUP = "model"


def train_stage2(
    settings: Settings,
    problems: Sequence[Problem],
    labels: LabelCache,
    init: ModelParams,
    run: RunDirectory | None = None,
    resume: bool = False,
    progress: bool = True,
) -> tuple[ModelParams, list[StepResult]]:
    """Distil the cached latent sequences into the decoder.

    Args:
        settings (Settings): Run settings; ``train.lam`` and ``train.beta``
            weight the KL and CE terms.
        problems (Sequence[Problem]): Training problems.
        labels (LabelCache): Stage-1 labels for every problem.
        init (ModelParams): Stage-1 decoder; copied, not modified.
        run (RunDirectory | None): Receives metrics and checkpoints.
        resume (bool): Continue from the newest checkpoint of ``run``.
        progress (bool): Show a progress bar.

    Raises:
        MissingLabelsError: If a problem has no cached labels.

    Returns:
        tuple[ModelParams, list[StepResult]]: Trained decoder and the step history.
    """
    train = settings.train
    tokenizer = Tokenizer(settings.data.alphabet)
    examples = prepare_examples(problems, tokenizer, train.ratio, settings.model.context_length)
    prepared = []
    for example in examples:
        alphas, latents = labels.get(example.id)
        layout, assignment = stage2_assignment(example, alphas, train.label_top_k)
        prepared.append(
            (layout_input(layout, list(latents)), AttentionMask.causal(len(layout)), assignment)
        )
    log.info("Stage 2 on %d examples (lambda=%g, beta=%g)", len(prepared), train.lam, train.beta)

    params = init.copy()
    state = OptimizerState()
    start = 0
    if resume and run is not None:
        restored = run.resume([GROUP], state)
        if restored is not None:
            params, start = restored.groups[GROUP], restored.step
    params.set_trainable(True, exclude=[EMBEDDING] if train.freeze_embeddings else [])

    def loss_fn(
        groups: dict[str, ModelParams], shard: Sequence[int]
    ) -> tuple[Tensor, dict[str, float]]:
        batch = [prepared[i] for i in shard]
        logits = forward_batch(groups[GROUP], [b[0] for b in batch], [b[1] for b in batch]).logits
        losses: list[Tensor] = []
        kl_sum = ce_sum = 0.0
        for row, (_, _, assignment) in enumerate(batch):
            loss, kl, ce = stage2_loss_parts(
                logits[row], assignment, train.lam, train.beta, train.distill_temperature
            )
            losses.append(loss)
            kl_sum += kl.item()
            ce_sum += ce.item()
        count = len(batch)
        total = sum(losses[1:], losses[0])
        return total / float(count), {"kl": kl_sum / count, "ce": ce_sum / count}

    plan = LoopSpec(
        stage="stage2",
        phase="stage2",
        start=start,
        stop=train.steps_stage2,
        seed=train.seed,
        batch_size=train.batch_size,
        n_examples=len(prepared),
        log_every=train.log_every,
        checkpoint_every=train.checkpoint_every,
        threads=settings.threads,
        progress=progress,
    )
    optimizer = OptimizerConfig.from_train(train, train.lr_stage2)
    history = run_loop(plan, {GROUP: params}, loss_fn, optimizer, state, run)
    if run is not None:
        run.save(FINAL, {GROUP: params}, train.seed, train.steps_stage2)
    return params, history
