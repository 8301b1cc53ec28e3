"""Common literal types shared by the pydantic models."""

from __future__ import annotations

from typing import Literal, TypeAlias

DType: TypeAlias = Literal["float32", "float64"]
"""Floating point precision of model parameters."""

Phase: TypeAlias = Literal["encoder_only", "decoder_only", "joint"]
"""Stage-1 EM schedule phases."""

StepMode: TypeAlias = Literal["latent", "explicit"]
"""Mode of a single generation step."""

ReasoningMode: TypeAlias = Literal["latent", "explicit"]
"""Latent reasoning (Latent-SFT) or explicit chain-of-thought (CoT-SFT baseline)."""

StopRule: TypeAlias = Literal["argmax", "threshold"]
"""Latent-termination criteria."""

Preset: TypeAlias = Literal["desk", "smoke"]
"""Named configuration presets."""
