"""Distances between point clouds: Fréchet distance and squared MMD."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial.distance import cdist, pdist

from latentsft.exceptions.errors import InvalidArgumentError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

# Added to the diagonal of covariances estimated from no more samples than dimensions.
RIDGE = 1e-6


def _points(name: str, value: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InvalidArgumentError(name, "must be a non-empty (n, d) matrix")
    return arr


def _pair(a: ArrayLike, b: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x, y = _points("a", a), _points("b", b)
    if x.shape[1] != y.shape[1]:
        raise InvalidArgumentError("b", f"dimension {y.shape[1]} does not match {x.shape[1]}")
    return x, y


def _covariance(x: NDArray[np.float64]) -> NDArray[np.float64]:
    n, d = x.shape
    cov = np.atleast_2d(np.cov(x, rowvar=False)) if n > 1 else np.zeros((d, d))
    if n <= d:
        cov = cov + RIDGE * np.eye(d)
    return cov


def _sqrt_psd(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2.0)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def fid(a: ArrayLike, b: ArrayLike) -> float:
    """Fréchet distance between Gaussians fitted to ``a`` and ``b``.

    ``||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`` with the trace
    term evaluated as ``tr((S_a^(1/2) S_b S_a^(1/2))^(1/2))`` so that only
    symmetric eigendecompositions are needed.

    Raises:
        InvalidArgumentError: On empty inputs or mismatched dimensions.
    """
    x, y = _pair(a, b)
    delta = x.mean(axis=0) - y.mean(axis=0)
    cov_a, cov_b = _covariance(x), _covariance(y)
    root_a = _sqrt_psd(cov_a)
    cross = np.trace(_sqrt_psd(root_a @ cov_b @ root_a))
    value = float(delta @ delta + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)
    return max(value, 0.0)


def median_bandwidth(a: ArrayLike, b: ArrayLike) -> float:
    """Median pairwise distance of the pooled sample; 1.0 when it is zero."""
    x, y = _pair(a, b)
    pooled = np.vstack([x, y])
    if pooled.shape[0] < 2:
        return 1.0
    median = float(np.median(pdist(pooled)))
    return median if median > 0.0 else 1.0


def mmd2(a: ArrayLike, b: ArrayLike, bandwidth: float | None = None) -> float:
    """Biased squared MMD with a Gaussian kernel.

    Args:
        a (ArrayLike): ``(n, d)`` samples.
        b (ArrayLike): ``(m, d)`` samples.
        bandwidth (float | None): Kernel width; the median heuristic when ``None``.

    Raises:
        InvalidArgumentError: On empty inputs, mismatched dimensions or a
            non-positive bandwidth.

    Returns:
        float: ``mean K(a, a) + mean K(b, b) - 2 mean K(a, b)``, clamped at 0.
    """
    x, y = _pair(a, b)
    width = median_bandwidth(x, y) if bandwidth is None else bandwidth
    if width <= 0.0:
        raise InvalidArgumentError("bandwidth", f"must be > 0, got {width}")

    def kernel(p: NDArray[np.float64], q: NDArray[np.float64]) -> float:
        return float(np.exp(-0.5 * cdist(p, q, "sqeuclidean") / width**2).mean())

    return max(kernel(x, x) + kernel(y, y) - 2.0 * kernel(x, y), 0.0)


def mean_cosine(
    a: ArrayLike, b: ArrayLike, pairs: int, rng: np.random.Generator, distinct: bool = False
) -> float:
    """Mean cosine similarity of ``pairs`` random row pairs.

    With ``distinct`` the two rows of a pair are never the same index, for
    comparing a set against itself.
    """
    x, y = _pair(a, b)
    i = rng.integers(0, x.shape[0], size=pairs)
    j = rng.integers(0, y.shape[0], size=pairs)
    if distinct and y.shape[0] > 1:
        j = np.where(j == i, (j + 1) % y.shape[0], j)
    u, v = x[i], y[j]
    norms = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    cosines = np.divide(np.sum(u * v, axis=1), norms, out=np.zeros(pairs), where=norms > 0)
    return float(cosines.mean())
