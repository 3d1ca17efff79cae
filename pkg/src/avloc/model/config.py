"""Model hyperparameters and their validity rules."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from ..errors import ConfigurationError

GATE_MODALITY_CHOICES = ("both", "audio_only", "visual_only")
MIX_ORDER_CHOICES = ("c2f_first", "f2c_first")
FUSION_SCOPE_CHOICES = ("adjacent", "all")


@dataclass
class ModelConfig:
    """Architecture knobs; defaults match the full-scale profile.

    ``max_len`` must be divisible by 2^(num_levels-1) so every pyramid level
    has an integral length, and ``embed_dim`` must split evenly across heads.
    """

    max_len: int = 224
    embed_dim: int = 256
    audio_dim: int = 128
    visual_dim: int = 2048
    num_classes: int = 100
    embed_depth: int = 2          # self-attention blocks per modality embedder
    num_levels: int = 6           # pyramid depth; level l has max_len / 2^l steps
    num_heads: int = 8
    cross_attn: bool = True       # cross-modal exchange branch
    temporal_gate: bool = True    # consistency gate branch
    gate_modalities: str = "both"
    coarse_to_fine: bool = True
    fine_to_coarse: bool = True
    mix_order: str = "c2f_first"
    fusion_scope: str = "adjacent"
    level_encoder_depth: int = 1
    layer_norm: bool = True
    positional_encoding: bool = True  # sinusoidal positions added after embedding
    swap_cross_roles: bool = False  # use the updated modality as the attention query
    ffn_ratio: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for key in ("max_len", "embed_dim", "audio_dim", "visual_dim", "num_classes",
                    "num_levels", "num_heads"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"model.{key} must be positive, got {getattr(self, key)}")
        for key in ("embed_depth", "level_encoder_depth"):
            if getattr(self, key) < 0:
                raise ConfigurationError(f"model.{key} must be >= 0, got {getattr(self, key)}")
        divisor = 2 ** (self.num_levels - 1)
        if self.max_len % divisor != 0:
            raise ConfigurationError(
                f"model.max_len={self.max_len} not divisible by 2^(num_levels-1)={divisor}"
            )
        if self.embed_dim % self.num_heads != 0:
            raise ConfigurationError(
                f"model.embed_dim={self.embed_dim} not divisible by model.num_heads={self.num_heads}"
            )
        if self.gate_modalities not in GATE_MODALITY_CHOICES:
            raise ConfigurationError(
                f"model.gate_modalities must be one of {GATE_MODALITY_CHOICES}, got {self.gate_modalities!r}"
            )
        if self.mix_order not in MIX_ORDER_CHOICES:
            raise ConfigurationError(
                f"model.mix_order must be one of {MIX_ORDER_CHOICES}, got {self.mix_order!r}"
            )
        if self.fusion_scope not in FUSION_SCOPE_CHOICES:
            raise ConfigurationError(
                f"model.fusion_scope must be one of {FUSION_SCOPE_CHOICES}, got {self.fusion_scope!r}"
            )

    def level_lengths(self) -> list[int]:
        return [self.max_len // (2 ** l) for l in range(self.num_levels)]

    def level_strides(self) -> list[int]:
        return [2 ** l for l in range(self.num_levels)]


def toy_model_config(**overrides) -> ModelConfig:
    """Small profile used by the fast test paths."""
    base = dict(
        max_len=64, embed_dim=32, audio_dim=64, visual_dim=128, num_classes=5,
        embed_depth=1, num_levels=4, num_heads=4,
    )
    base.update(overrides)
    return ModelConfig(**base)


def model_config_fields() -> list[str]:
    return [f.name for f in fields(ModelConfig)]
