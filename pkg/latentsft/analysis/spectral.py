"""Singular-value spectra and effective rank."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.numerics.probability import entropy

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


def spectrum(matrix: ArrayLike) -> NDArray[np.float64]:
    """Singular values in decreasing order."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidArgumentError("matrix", f"expected 2 dimensions, got {arr.ndim}")
    return np.linalg.svd(arr, compute_uv=False)


def effective_rank(matrix: ArrayLike) -> float:
    """``exp`` of the entropy of the normalized singular values.

    Raises:
        InvalidArgumentError: If the matrix is all zeros.
    """
    sigma = spectrum(matrix)
    total = float(sigma.sum())
    if total <= 0.0:
        raise InvalidArgumentError("matrix", "effective rank of an all-zero matrix is undefined")
    return float(np.exp(entropy(sigma / total)))


def normalized_spectrum(matrix: ArrayLike) -> list[float]:
    """Singular values divided by the largest one, for decay curves."""
    sigma = spectrum(matrix)
    if sigma.size == 0 or sigma[0] <= 0.0:
        return [0.0] * int(sigma.size)
    return (sigma / sigma[0]).tolist()
