"""AdamW with global-norm clipping.

Weight decay is decoupled from the adaptive update and only applies to
matrices; norm gains are not decayed. Steps with a non-finite gradient are
skipped and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft import get_logger
from latentsft.exceptions.errors import InvalidArgumentError

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

    from latentsft.models.config import TrainConfig
    from latentsft.numerics.tensor import Tensor

log = get_logger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """AdamW hyperparameters."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: float | None = None

    @classmethod
    def from_train(cls, config: TrainConfig, lr: float) -> OptimizerConfig:
        """Shared settings of ``config`` with a stage-specific learning rate."""
        return cls(
            lr=lr,
            beta1=config.adam_beta1,
            beta2=config.adam_beta2,
            eps=config.adam_eps,
            weight_decay=config.weight_decay,
            grad_clip=config.grad_clip,
        )


@dataclass
class OptimizerState:
    """First and second moments plus per-tensor update counts."""

    m: dict[str, NDArray[Any]] = field(default_factory=dict)
    v: dict[str, NDArray[Any]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    anomalies: int = 0

    def arrays(self, prefix: str = "") -> dict[str, NDArray[Any]]:
        """Moments as named arrays for checkpointing."""
        out = {f"adam.m.{k}": value for k, value in self.m.items() if k.startswith(prefix)}
        out.update({f"adam.v.{k}": value for k, value in self.v.items() if k.startswith(prefix)})
        return out

    def metadata(self, prefix: str = "") -> dict[str, Any]:
        """Counters as JSON-serializable metadata."""
        return {
            "counts": {k: v for k, v in self.counts.items() if k.startswith(prefix)},
            "anomalies": self.anomalies,
        }

    def restore(self, arrays: Mapping[str, NDArray[Any]], metadata: Mapping[str, Any]) -> None:
        """Inverse of ``arrays`` and ``metadata``; merges into the current state."""
        for key, value in arrays.items():
            if key.startswith("adam.m."):
                self.m[key.removeprefix("adam.m.")] = np.array(value)
            elif key.startswith("adam.v."):
                self.v[key.removeprefix("adam.v.")] = np.array(value)
        self.counts.update({k: int(v) for k, v in metadata.get("counts", {}).items()})
        self.anomalies = max(self.anomalies, int(metadata.get("anomalies", 0)))


def global_norm(grads: Mapping[str, NDArray[Any]]) -> float:
    """L2 norm over all gradient entries, accumulated in float64."""
    total = sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())
    return float(np.sqrt(total))


def optimizer_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, NDArray[Any]],
    config: OptimizerConfig,
    state: OptimizerState,
) -> bool:
    """Apply one AdamW update in place to every tensor that has a gradient.

    Args:
        params (Mapping[str, Tensor]): Parameters keyed like ``grads``.
        grads (Mapping[str, NDArray]): Gradients; tensors without an entry
            are left untouched.
        config (OptimizerConfig): Hyperparameters.
        state (OptimizerState): Moments, updated in place.

    Raises:
        InvalidArgumentError: On unknown names or shape mismatches.

    Returns:
        bool: False when the step was skipped for a non-finite gradient.
    """
    for name, grad in grads.items():
        if name not in params:
            raise InvalidArgumentError("grads", f"no parameter named '{name}'")
        if grad.shape != params[name].shape:
            raise InvalidArgumentError(
                "grads", f"'{name}' gradient {grad.shape} vs parameter {params[name].shape}"
            )
    norm = global_norm(grads)
    if not np.isfinite(norm):
        state.anomalies += 1
        log.warning("Skipping optimizer step: non-finite gradient (anomaly #%d)", state.anomalies)
        return False
    scale = 1.0
    if config.grad_clip is not None and norm > config.grad_clip:
        scale = config.grad_clip / norm
    for name, grad in grads.items():
        tensor = params[name]
        g = grad * scale if scale != 1.0 else grad
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or v is None:
            m = np.zeros_like(tensor.data)
            v = np.zeros_like(tensor.data)
        t = state.counts.get(name, 0) + 1
        m = config.beta1 * m + (1.0 - config.beta1) * g
        v = config.beta2 * v + (1.0 - config.beta2) * (g * g)
        m_hat = m / (1.0 - config.beta1**t)
        v_hat = v / (1.0 - config.beta2**t)
        if config.weight_decay and tensor.ndim > 1:
            tensor.data *= 1.0 - config.lr * config.weight_decay
        tensor.data -= (config.lr * m_hat / (np.sqrt(v_hat) + config.eps)).astype(tensor.dtype)
        state.m[name], state.v[name], state.counts[name] = m, v, t
    return True
