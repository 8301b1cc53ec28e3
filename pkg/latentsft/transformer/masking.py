"""Boolean attention masks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from latentsft.exceptions.errors import InvalidArgumentError


@dataclass(frozen=True)
class AttentionMask:
    """Square allow-matrix; ``allow[i, j]`` lets position ``i`` attend to ``j``.

    Every mask allows self-attention and forbids attending to later
    positions.

    Raises:
        InvalidArgumentError: If the matrix is not square boolean, lacks a
            self-allowed diagonal or allows a future position.
    """

    allow: NDArray[np.bool_]

    def __post_init__(self) -> None:
        allow = np.asarray(self.allow)
        if allow.dtype != np.bool_:
            raise InvalidArgumentError("allow", f"expected bool, got {allow.dtype}")
        if allow.ndim != 2 or allow.shape[0] != allow.shape[1] or allow.shape[0] == 0:
            msg = f"expected a non-empty square matrix, got {allow.shape}"
            raise InvalidArgumentError("allow", msg)
        if not allow.diagonal().all():
            raise InvalidArgumentError("allow", "every position must attend to itself")
        if np.triu(allow, k=1).any():
            raise InvalidArgumentError("allow", "future positions must be blocked")
        allow = allow.copy()
        allow.setflags(write=False)
        object.__setattr__(self, "allow", allow)

    @classmethod
    def causal(cls, length: int) -> AttentionMask:
        """Lower-triangular mask of ``length`` positions."""
        if length < 1:
            raise InvalidArgumentError("length", f"must be >= 1, got {length}")
        return cls(np.tril(np.ones((length, length), dtype=bool)))

    @property
    def length(self) -> int:
        """Number of positions."""
        return int(self.allow.shape[0])

    def allowed(self, row: int) -> set[int]:
        """Positions visible from ``row``."""
        return {int(j) for j in np.flatnonzero(self.allow[row])}

    def count(self) -> int:
        """Number of allowed entries."""
        return int(self.allow.sum())

    def padded(self, length: int) -> NDArray[np.bool_]:
        """Allow-matrix extended to ``length``; padding rows only see themselves."""
        if length < self.length:
            raise InvalidArgumentError("length", f"{length} < mask length {self.length}")
        out = np.zeros((length, length), dtype=bool)
        out[: self.length, : self.length] = self.allow
        pad = np.arange(self.length, length)
        out[pad, pad] = True
        return out

    def to_bits(self) -> dict[str, Any]:
        """Row-major bit-packed export for golden files."""
        return {
            "length": self.length,
            "bits": np.packbits(self.allow, axis=-1).tobytes().hex(),
        }

    @classmethod
    def from_bits(cls, payload: dict[str, Any]) -> AttentionMask:
        """Inverse of ``to_bits``."""
        length = int(payload["length"])
        row_bytes = (length + 7) // 8
        packed = np.frombuffer(bytes.fromhex(payload["bits"]), dtype=np.uint8)
        packed = packed.reshape(length, row_bytes)
        return cls(np.unpackbits(packed, axis=-1, count=length).astype(bool))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AttentionMask):
            return NotImplemented
        return bool(np.array_equal(self.allow, other.allow))

    def __hash__(self) -> int:
        return hash((self.length, self.allow.tobytes()))
