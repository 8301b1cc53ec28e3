"""Decoder-only transformer with a tied embedding head."""

from latentsft.transformer.forward import (
    DenseVector,
    ForwardOutput,
    SequenceInput,
    TokenId,
    Transformer,
    forward,
    forward_batch,
)
from latentsft.transformer.masking import AttentionMask
from latentsft.transformer.params import ModelParams, expected_parameter_count, init_params

__all__ = [
    "AttentionMask",
    "DenseVector",
    "ForwardOutput",
    "ModelParams",
    "SequenceInput",
    "TokenId",
    "Transformer",
    "expected_parameter_count",
    "forward",
    "forward_batch",
    "init_params",
]
