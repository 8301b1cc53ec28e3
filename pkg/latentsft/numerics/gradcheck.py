"""Finite-difference validation of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from latentsft import get_logger
from latentsft.numerics.tensor import Tensor, no_grad

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping

    from numpy.typing import ArrayLike

log = get_logger(__name__)

MAGNITUDE_FLOOR: float = 1e-4
"""Denominator floor of the relative error, so near-zero gradients compare absolutely."""


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of a gradient check.

    Attributes:
        max_relative_error: Worst ``|a - n| / max(|a|, |n|, floor)`` seen.
        tolerance: Threshold the check was run against.
        checked: Number of coordinates compared.
        failures: Coordinates whose values were non-finite.
    """

    max_relative_error: float
    tolerance: float
    checked: int
    failures: tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        """True iff every value was finite and the worst error is below tolerance."""
        return not self.failures and self.max_relative_error < self.tolerance


def _relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric), MAGNITUDE_FLOOR)
    return abs(analytic - numeric) / scale


def gradient_check(
    function: Callable[[Tensor], Tensor],
    point: ArrayLike | Tensor,
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare reverse-mode gradients with central finite differences.

    Args:
        function (Callable[[Tensor], Tensor]): Scalar-valued function.
        point (ArrayLike | Tensor): Evaluation point; copied to float64.
        step (float): Finite-difference step.
        tolerance (float): Pass threshold on the max relative error.

    Returns:
        GradCheckReport: Comparison summary.
    """
    base = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True)
    function(x).backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(base)

    worst = 0.0
    failures: list[str] = []
    with no_grad():
        for index in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[index] += step
            upper = function(Tensor(shifted)).item()
            shifted[index] -= 2.0 * step
            lower = function(Tensor(shifted)).item()
            numeric = (upper - lower) / (2.0 * step)
            value = float(analytic[index])
            if not (np.isfinite(numeric) and np.isfinite(value)):
                failures.append(str(index))
                continue
            worst = max(worst, _relative_error(value, numeric))
    return GradCheckReport(worst, tolerance, int(base.size), tuple(failures))


def gradient_check_parameters(
    loss: Callable[[], Tensor],
    parameters: Mapping[str, Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-3,
    entries_per_tensor: int = 6,
    seed: int = 0,
) -> GradCheckReport:
    """Gradient check of a loss closure w.r.t. named leaf tensors.

    Perturbs a random sample of entries of every tensor in place, so the
    closure must read the parameters at call time.

    Args:
        loss (Callable[[], Tensor]): Recomputes the scalar loss.
        parameters (Mapping[str, Tensor]): Leaves with ``requires_grad``.
        step (float): Finite-difference step.
        tolerance (float): Pass threshold on the max relative error.
        entries_per_tensor (int): Sampled coordinates per tensor.
        seed (int): Sampling seed.

    Returns:
        GradCheckReport: Comparison summary.
    """
    for tensor in parameters.values():
        tensor.zero_grad()
    loss().backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    failures: list[str] = []
    with no_grad():
        for name, tensor in parameters.items():
            grad: Any = (
                tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            )
            flat = tensor.data.reshape(-1)
            count = min(entries_per_tensor, flat.size)
            for position in rng.choice(flat.size, size=count, replace=False):
                original = flat[position]
                flat[position] = original + step
                upper = loss().item()
                flat[position] = original - step
                lower = loss().item()
                flat[position] = original
                numeric = (upper - lower) / (2.0 * step)
                value = float(grad.reshape(-1)[position])
                checked += 1
                if not (np.isfinite(numeric) and np.isfinite(value)):
                    failures.append(f"{name}[{position}]")
                    continue
                error = _relative_error(value, numeric)
                if error >= tolerance:
                    log.debug("%s[%d]: analytic %g numeric %g", name, position, value, numeric)
                worst = max(worst, error)
    return GradCheckReport(worst, tolerance, checked, tuple(failures))
