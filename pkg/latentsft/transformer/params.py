"""Transformer parameters.

The output head is the embedding matrix itself: ``E`` has shape ``(d, V)``
and logits are ``h @ E``, so there is no separate head tensor to keep in
sync. Parameter count::

    d*V + C*d + n_layers * (2d + 4d^2 + 2*d*d_ff) + d

for vocabulary ``V``, width ``d``, context ``C`` and feed-forward width
``d_ff`` (per layer: two norm gains, four attention projections, two MLP
matrices; plus the final norm gain). There are no biases.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import humanize
import numpy as np

from latentsft import get_logger
from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.numerics.tensor import Tensor

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator

    from numpy.typing import NDArray

    from latentsft.models.config import ModelConfig

log = get_logger(__name__)

EMBEDDING = "embedding"
POSITION = "position"
FINAL_NORM = "final_norm"
LAYER_TENSORS: tuple[str, ...] = (
    "attn_norm",
    "wq",
    "wk",
    "wv",
    "wo",
    "mlp_norm",
    "w_in",
    "w_out",
)


def layer_name(layer: int, tensor: str) -> str:
    """Qualified name of a per-layer tensor."""
    return f"layers.{layer}.{tensor}"


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count of ``config``."""
    d, v, c, f = config.d_model, config.vocab, config.context_length, config.ff_width
    return d * v + c * d + config.n_layers * (2 * d + 4 * d * d + 2 * d * f) + d


@dataclass
class ModelParams:
    """Named parameter tensors of one transformer.

    Attributes:
        config: Dimensions the tensors were built for.
        tensors: Leaves keyed by qualified name, in a fixed order.
    """

    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def embedding(self) -> Tensor:
        """``E`` with shape ``(d, V)``."""
        return self.tensors[EMBEDDING]

    @property
    def head(self) -> Tensor:
        """The tied output head; the same object as ``embedding``."""
        return self.tensors[EMBEDDING]

    @property
    def dtype(self) -> np.dtype:
        """Parameter precision."""
        return self.embedding.dtype

    def parameter_count(self) -> int:
        """Total number of scalars."""
        return int(sum(t.data.size for t in self.tensors.values()))

    def arrays(self) -> dict[str, NDArray]:
        """Name to array view, sharing storage."""
        return {name: t.data for name, t in self.tensors.items()}

    def copy(self) -> ModelParams:
        """Deep copy with independent storage and the same trainable flags."""
        return ModelParams(
            self.config,
            {
                name: Tensor(t.data.copy(), requires_grad=t.requires_grad, name=name)
                for name, t in self.tensors.items()
            },
        )

    def detached(self) -> ModelParams:
        """Fresh leaves sharing storage, one tape per caller.

        Worker threads differentiate through their own leaves and hand the
        gradients back for an ordered reduction.
        """
        return ModelParams(
            self.config,
            {
                name: Tensor(t.data, requires_grad=t.requires_grad, name=name)
                for name, t in self.tensors.items()
            },
        )

    def zero_grad(self) -> None:
        """Clear accumulated gradients."""
        for tensor in self.tensors.values():
            tensor.zero_grad()

    def set_trainable(self, trainable: bool, exclude: Iterable[str] = ()) -> None:
        """Set ``requires_grad`` on every tensor except ``exclude``."""
        skip = set(exclude)
        for name, tensor in self.tensors.items():
            tensor.requires_grad = trainable and name not in skip

    def trainable(self) -> list[str]:
        """Names of tensors that currently require gradients."""
        return [name for name, t in self.tensors.items() if t.requires_grad]

    def checksum(self) -> str:
        """sha256 over names, shapes and raw bytes, in order."""
        digest = hashlib.sha256()
        for name, tensor in self.tensors.items():
            digest.update(name.encode())
            digest.update(str(tensor.shape).encode())
            digest.update(np.ascontiguousarray(tensor.data).tobytes())
        return digest.hexdigest()

    def load_arrays(self, arrays: dict[str, NDArray]) -> None:
        """Copy values in place.

        Raises:
            InvalidArgumentError: On missing names or shape mismatches.
        """
        for name, tensor in self.tensors.items():
            if name not in arrays:
                raise InvalidArgumentError("arrays", f"missing tensor '{name}'")
            if arrays[name].shape != tensor.shape:
                raise InvalidArgumentError(
                    "arrays", f"'{name}' has shape {arrays[name].shape}, expected {tensor.shape}"
                )
            tensor.data[...] = arrays[name]


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered tensor names and shapes of ``config``."""
    d, f = config.d_model, config.ff_width
    shapes: dict[str, tuple[int, ...]] = {
        EMBEDDING: (d, config.vocab),
        POSITION: (config.context_length, d),
    }
    per_layer = {
        "attn_norm": (d,),
        "wq": (d, d),
        "wk": (d, d),
        "wv": (d, d),
        "wo": (d, d),
        "mlp_norm": (d,),
        "w_in": (d, f),
        "w_out": (f, d),
    }
    for layer in range(config.n_layers):
        for tensor in LAYER_TENSORS:
            shapes[layer_name(layer, tensor)] = per_layer[tensor]
    shapes[FINAL_NORM] = (d,)
    return shapes


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Gaussian initialization with ``config.init_std``; norm gains start at one.

    Args:
        config (ModelConfig): Dimensions; the vocabulary must be resolved.
        seed (int): Generator seed. Equal seeds give bit-identical tensors.

    Returns:
        ModelParams: Trainable parameters.
    """
    rng = np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)
    tensors: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        if len(shape) == 1:
            data = np.ones(shape, dtype=dtype)
        else:
            data = rng.normal(0.0, config.init_std, size=shape).astype(dtype)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    params = ModelParams(config, tensors)
    log.debug(
        "Initialized %s parameters (seed=%d, %s)",
        humanize.intcomma(params.parameter_count()),
        seed,
        config.dtype,
    )
    return params
