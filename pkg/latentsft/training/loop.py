"""Shared optimization loop of all training stages.

A loss function receives detached copies of the parameter groups plus the
example indices of one shard and returns the shard's mean loss. Shards run on
worker threads and their gradients are reduced in shard order, so a given
thread count always reproduces the same trajectory.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import humanize
import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, TaskProgressColumn, TextColumn, TimeElapsedColumn

from latentsft import get_logger
from latentsft.exceptions.errors import DivergenceError
from latentsft.helpers.distributed import ordered_map, shards
from latentsft.training.optimizer import (
    OptimizerConfig,
    OptimizerState,
    global_norm,
    optimizer_step,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from latentsft.numerics.tensor import Tensor
    from latentsft.training.runs import RunDirectory
    from latentsft.transformer.params import ModelParams

    LossFn = Callable[[dict[str, ModelParams], Sequence[int]], tuple[Tensor, dict[str, float]]]

log = get_logger(__name__)
console = Console(stderr=True)


def batch_indices(seed: int, step: int, n_examples: int, batch_size: int) -> list[int]:
    """Example indices of ``step``; a pure function of ``(seed, step)``."""
    rng = np.random.default_rng([seed, step])
    size = min(batch_size, n_examples)
    return [int(i) for i in rng.choice(n_examples, size=size, replace=False)]


@dataclass
class StepResult:
    """Outcome of one optimizer step."""

    step: int
    loss: float
    parts: dict[str, float] = field(default_factory=dict)
    grad_norm: float = 0.0
    applied: bool = True


def compute_gradients(
    groups: dict[str, ModelParams],
    loss_fn: LossFn,
    indices: Sequence[int],
    threads: int = 1,
) -> tuple[float, dict[str, float], dict[str, NDArray[Any]]]:
    """Mean loss, mean loss parts and gradients of the trainable tensors.

    Gradients are keyed ``<group>.<tensor>``; trainable tensors the loss
    does not reach get zeros.
    """
    parts = shards(list(indices), max(1, threads))

    def work(shard: list[int]) -> tuple[float, dict[str, float], dict[str, NDArray[Any]]]:
        local = {name: params.detached() for name, params in groups.items()}
        loss, extras = loss_fn(local, shard)
        loss.backward()
        grads = {
            f"{group}.{name}": (
                tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            )
            for group, params in local.items()
            for name, tensor in params.tensors.items()
            if tensor.requires_grad
        }
        return loss.item(), extras, grads

    results = ordered_map(work, parts, threads)
    total = len(indices)
    loss = 0.0
    extras: dict[str, float] = {}
    grads: dict[str, NDArray[Any]] = {}
    for shard, (shard_loss, shard_extras, shard_grads) in zip(parts, results, strict=True):
        weight = len(shard) / total
        loss += weight * shard_loss
        for key, value in shard_extras.items():
            extras[key] = extras.get(key, 0.0) + weight * value
        for key, grad in shard_grads.items():
            scaled = grad * weight if weight != 1.0 else grad
            grads[key] = scaled if key not in grads else grads[key] + scaled
    return loss, extras, grads


@dataclass
class LoopSpec:
    """Settings of one ``run_loop`` call."""

    stage: str
    phase: str
    start: int
    stop: int
    seed: int
    batch_size: int
    n_examples: int
    log_every: int
    checkpoint_every: int
    threads: int = 1
    progress: bool = True
    metadata: dict[str, Any] = field(default_factory=dict)


def run_loop(
    plan: LoopSpec,
    groups: dict[str, ModelParams],
    loss_fn: LossFn,
    optimizer: OptimizerConfig,
    state: OptimizerState,
    run: RunDirectory | None = None,
) -> list[StepResult]:
    """Optimize steps ``[start, stop)``.

    Raises:
        DivergenceError: If the loss becomes non-finite.

    Returns:
        list[StepResult]: One entry per executed step.
    """
    named = {
        f"{group}.{name}": tensor
        for group, params in groups.items()
        for name, tensor in params.tensors.items()
    }
    history: list[StepResult] = []
    started = time.perf_counter()
    progress = Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        TimeElapsedColumn(),
        TextColumn("loss={task.fields[loss]:.4f}", justify="right"),
        console=console,
        transient=True,
        disable=not plan.progress,
    )
    with progress:
        task = progress.add_task(
            f"{plan.stage}:{plan.phase}", total=plan.stop - plan.start, loss=float("nan")
        )
        for step in range(plan.start, plan.stop):
            indices = batch_indices(plan.seed, step, plan.n_examples, plan.batch_size)
            loss, parts, grads = compute_gradients(groups, loss_fn, indices, plan.threads)
            if not math.isfinite(loss):
                raise DivergenceError(plan.stage, step, loss)
            norm = global_norm(grads)
            applied = optimizer_step(named, grads, optimizer, state)
            result = StepResult(step, loss, parts, norm, applied)
            history.append(result)
            progress.update(task, advance=1, loss=loss)
            if run is not None:
                run.log_metrics(
                    {
                        "step": step + 1,
                        "phase": plan.phase,
                        "loss": loss,
                        "kl": parts.get("kl", ""),
                        "ce": parts.get("ce", ""),
                        "grad_norm": norm,
                        "lr": optimizer.lr,
                        "skipped": int(not applied),
                    }
                )
            done = step + 1
            if done % plan.log_every == 0 or done == plan.stop:
                log.info(
                    "%s %s step %d/%d loss %.5f (%s)",
                    plan.stage,
                    plan.phase,
                    done,
                    plan.stop,
                    loss,
                    humanize.naturaldelta(time.perf_counter() - started),
                )
            if run is not None and done % plan.checkpoint_every == 0:
                run.save(
                    run.checkpoint_tag(done),
                    groups,
                    plan.seed,
                    done,
                    state,
                    {"phase": plan.phase, **plan.metadata},
                )
    return history
