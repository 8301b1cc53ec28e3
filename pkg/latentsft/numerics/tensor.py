"""Dense tensors with reverse-mode automatic differentiation.

Operations record their inputs and a backward closure while gradient
recording is enabled. ``Tensor.backward`` walks the recorded graph in reverse
topological order and accumulates gradients into leaf tensors that require
them. The tape is built per thread: ``no_grad`` only affects the calling
thread.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft.exceptions.errors import InvalidArgumentError

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator, Sequence

    from numpy.typing import ArrayLike, NDArray

    Backward = Callable[[NDArray[Any]], Sequence["NDArray[Any] | None"]]

_STATE = threading.local()


def grad_enabled() -> bool:
    """Whether operations on this thread currently record a graph."""
    return bool(getattr(_STATE, "enabled", True))


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread."""
    previous = grad_enabled()
    _STATE.enabled = False
    try:
        yield
    finally:
        _STATE.enabled = previous


def unbroadcast(grad: NDArray[Any], shape: tuple[int, ...]) -> NDArray[Any]:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting.

    Args:
        grad (NDArray): Gradient with the broadcast result shape.
        shape (tuple[int, ...]): Shape of the operand before broadcasting.

    Returns:
        NDArray: Gradient with exactly ``shape``.
    """
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_float_array(data: ArrayLike) -> NDArray[Any]:
    array = np.asarray(data)
    if not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float64)
    return array


class Tensor:
    """A float array that optionally participates in automatic differentiation.

    Args:
        data (ArrayLike): Values; integer input is promoted to float64.
        requires_grad (bool): Leaf flag; gradients accumulate into ``grad``.
        name (str | None): Optional label used in error messages.
    """

    __slots__ = ("_backward", "_parents", "data", "grad", "name", "requires_grad")
    # Makes ``ndarray <op> Tensor`` dispatch to the Tensor reflected operators.
    __array_priority__ = 100.0

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.data: NDArray[Any] = _as_float_array(data)
        self.grad: NDArray[Any] | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Backward | None = None

    @classmethod
    def from_op(
        cls,
        data: NDArray[Any],
        parents: tuple[Tensor, ...],
        backward: Backward,
    ) -> Tensor:
        """Create the output of an operation and record it when needed.

        Args:
            data (NDArray): Forward result.
            parents (tuple[Tensor, ...]): Operation inputs, in the order the
                backward closure returns their gradients.
            backward (Backward): Maps the output gradient to parent gradients.

        Returns:
            Tensor: The operation output.
        """
        out = cls(data)
        if grad_enabled() and any(parent.requires_grad for parent in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    # ------------------------------------------------------------------ #
    # Introspection
    # ------------------------------------------------------------------ #
    @property
    def shape(self) -> tuple[int, ...]:
        """Array shape."""
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        """Number of dimensions."""
        return int(self.data.ndim)

    @property
    def dtype(self) -> np.dtype[Any]:
        """Element type."""
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        """True for tensors not produced by a recorded operation."""
        return self._backward is None

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        if self.data.size != 1:
            raise InvalidArgumentError("item", f"tensor of shape {self.shape} is not scalar")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> NDArray[Any]:
        """The underlying array (shared, not copied)."""
        return self.data

    def detach(self) -> Tensor:
        """A new leaf sharing this tensor's data, outside any graph."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        """Drop the accumulated gradient."""
        self.grad = None

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # ------------------------------------------------------------------ #
    # Backpropagation
    # ------------------------------------------------------------------ #
    def _topological(self) -> list[Tensor]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend(
                (parent, False)
                for parent in node._parents
                if parent.requires_grad and id(parent) not in seen
            )
        return order

    def backward(self, grad: ArrayLike | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Args:
            grad (ArrayLike | None): Upstream gradient. Defaults to 1 for
                single-element tensors.

        Raises:
            InvalidArgumentError: If ``grad`` is omitted for a non-scalar tensor.
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgumentError(
                    "grad", "required when calling backward on a non-scalar tensor"
                )
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=self.data.dtype).reshape(self.data.shape)
        pending: dict[int, NDArray[Any]] = {id(self): seed}
        for node in reversed(self._topological()):
            upstream = pending.pop(id(node), None)
            if upstream is None:
                continue
            if node._backward is None:
                node.grad = (
                    np.array(upstream, copy=True)
                    if node.grad is None
                    else node.grad + upstream
                )
                continue
            for parent, part in zip(
                node._parents, node._backward(upstream), strict=True
            ):
                if part is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = part if key not in pending else pending[key] + part

    # ------------------------------------------------------------------ #
    # Arithmetic
    # ------------------------------------------------------------------ #
    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        rhs = lift(other, self.dtype)
        a_shape, b_shape = self.shape, rhs.shape
        return Tensor.from_op(
            self.data + rhs.data,
            (self, rhs),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        rhs = lift(other, self.dtype)
        a_shape, b_shape = self.shape, rhs.shape
        return Tensor.from_op(
            self.data - rhs.data,
            (self, rhs),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other: Tensor | ArrayLike) -> Tensor:
        return lift(other, self.dtype) - self

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        rhs = lift(other, self.dtype)
        a, b = self.data, rhs.data
        return Tensor.from_op(
            a * b,
            (self, rhs),
            lambda g: (unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Tensor | ArrayLike) -> Tensor:
        rhs = lift(other, self.dtype)
        a, b = self.data, rhs.data
        return Tensor.from_op(
            a / b,
            (self, rhs),
            lambda g: (
                unbroadcast(g / b, a.shape),
                unbroadcast(-g * a / (b * b), b.shape),
            ),
        )

    def __rtruediv__(self, other: Tensor | ArrayLike) -> Tensor:
        return lift(other, self.dtype) / self

    def __pow__(self, exponent: float) -> Tensor:
        a = self.data
        return Tensor.from_op(
            a**exponent,
            (self,),
            lambda g: (g * exponent * a ** (exponent - 1),),
        )

    def __matmul__(self, other: Tensor | ArrayLike) -> Tensor:
        rhs = lift(other, self.dtype)
        a, b = self.data, rhs.data
        if a.ndim == 1 and b.ndim == 1:
            raise InvalidArgumentError("matmul", "use (a * b).sum() for vector dots")

        def backward(g: NDArray[Any]) -> tuple[NDArray[Any], NDArray[Any]]:
            left = a[None, :] if a.ndim == 1 else a
            right = b[:, None] if b.ndim == 1 else b
            grad = g
            if a.ndim == 1:
                grad = np.expand_dims(grad, -2)
            if b.ndim == 1:
                grad = np.expand_dims(grad, -1)
            grad_a = grad @ np.swapaxes(right, -1, -2)
            grad_b = np.swapaxes(left, -1, -2) @ grad
            if a.ndim == 1:
                grad_a = grad_a[..., 0, :]
            if b.ndim == 1:
                grad_b = grad_b[..., :, 0]
            return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

        return Tensor.from_op(a @ b, (self, rhs), backward)

    def __rmatmul__(self, other: Tensor | ArrayLike) -> Tensor:
        return lift(other, self.dtype) @ self

    # ------------------------------------------------------------------ #
    # Reductions and shape
    # ------------------------------------------------------------------ #
    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        """Sum over ``axis`` (all axes by default)."""
        shape = self.shape

        def backward(g: NDArray[Any]) -> tuple[NDArray[Any]]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(
            np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward
        )

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        """Arithmetic mean over ``axis`` (all axes by default)."""
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[i] for i in axes]))
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape: int) -> Tensor:
        """Reshape without copying when possible."""
        original = self.shape
        return Tensor.from_op(
            self.data.reshape(*shape), (self,), lambda g: (g.reshape(original),)
        )

    def transpose(self, *axes: int) -> Tensor:
        """Permute axes; no arguments reverses them."""
        order = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(order))
        return Tensor.from_op(
            self.data.transpose(order), (self,), lambda g: (g.transpose(inverse),)
        )

    @property
    def T(self) -> Tensor:  # noqa: N802
        """Reversed-axes view."""
        return self.transpose()

    def __getitem__(self, index: Any) -> Tensor:
        shape, dtype = self.shape, self.dtype

        def backward(g: NDArray[Any]) -> tuple[NDArray[Any]]:
            full = np.zeros(shape, dtype=dtype)
            np.add.at(full, index, g)
            return (full,)

        return Tensor.from_op(np.asarray(self.data[index]), (self,), backward)

    # ------------------------------------------------------------------ #
    # Elementwise
    # ------------------------------------------------------------------ #
    def exp(self) -> Tensor:
        """Elementwise exponential."""
        out = np.exp(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * out,))

    def log(self) -> Tensor:
        """Elementwise natural logarithm."""
        a = self.data
        return Tensor.from_op(np.log(a), (self,), lambda g: (g / a,))

    def tanh(self) -> Tensor:
        """Elementwise hyperbolic tangent."""
        out = np.tanh(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * (1.0 - out * out),))

    def clip_min(self, floor: float) -> Tensor:
        """Elementwise ``max(x, floor)``; the gradient is zero where clipped."""
        a = self.data
        return Tensor.from_op(
            np.maximum(a, floor), (self,), lambda g: (g * (a > floor),)
        )


def lift(value: Tensor | ArrayLike, dtype: Any = None) -> Tensor:
    """Wrap constants as non-differentiable tensors of the partner dtype.

    Keeps float32 graphs in float32 when they meet Python scalars.
    """
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))
