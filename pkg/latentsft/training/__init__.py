"""CoT-SFT, stage-1 and stage-2 training."""

from latentsft.training.cot import train_cot_sft
from latentsft.training.optimizer import OptimizerConfig, OptimizerState, optimizer_step
from latentsft.training.stage1 import EMState, LabelCache, train_stage1
from latentsft.training.stage2 import train_stage2

__all__ = [
    "EMState",
    "LabelCache",
    "OptimizerConfig",
    "OptimizerState",
    "optimizer_step",
    "train_cot_sft",
    "train_stage1",
    "train_stage2",
]
