from .blocks import Attention, Conv1d, FeedForward, LayerNorm, Linear, Module, TransformerBlock
from .config import ModelConfig, toy_model_config
from .network import (
    ForwardResult,
    GatePair,
    LevelOutput,
    LocalizerNetwork,
    level_valid_lengths,
)

__all__ = [
    "Attention",
    "Conv1d",
    "FeedForward",
    "ForwardResult",
    "GatePair",
    "LayerNorm",
    "LevelOutput",
    "Linear",
    "LocalizerNetwork",
    "ModelConfig",
    "Module",
    "TransformerBlock",
    "level_valid_lengths",
    "toy_model_config",
]
