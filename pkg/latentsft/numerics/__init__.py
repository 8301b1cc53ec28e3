"""Tensor arithmetic, automatic differentiation and probability primitives."""

from latentsft.numerics.gradcheck import GradCheckReport, gradient_check
from latentsft.numerics.probability import (
    EPSILON,
    ProbVector,
    cross_entropy,
    kl_divergence,
    softmax_with_temperature,
)
from latentsft.numerics.tensor import Tensor, no_grad

__all__ = [
    "EPSILON",
    "GradCheckReport",
    "ProbVector",
    "Tensor",
    "cross_entropy",
    "gradient_check",
    "kl_divergence",
    "no_grad",
    "softmax_with_temperature",
]
