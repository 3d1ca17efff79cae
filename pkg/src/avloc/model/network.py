"""The cross-modal temporal pyramid detector.

Pipeline: per-modality embedding (two projection convs + self-attention),
a stack of cross-modal pyramid stages (strided downsampling, cross-modal
attention exchange, temporal consistency gating), bidirectional cross-scale
collaboration, per-scale encoding, and shared classification/regression
heads emitting per-timestep class probabilities and boundary offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..autodiff import Parameter, Tensor, concat, maxpool1d
from ..data import FeatureSequence
from ..errors import ConfigurationError
from .blocks import (
    Attention,
    Conv1d,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    TransformerBlock,
    mask_rows,
    xavier,
)
from .config import ModelConfig

CLS_PRIOR = 0.01  # initial positive rate baked into the classification bias


@dataclass
class LevelOutput:
    """Per-timestep predictions at one pyramid level."""

    level: int
    stride: int
    valid_len: int            # valid timesteps at this level's resolution
    probs: Tensor             # [T_l, C], sigmoid outputs
    offsets: Tensor           # [2, C, T_l], nonnegative, in level-stride units


@dataclass
class GatePair:
    """Consistency gate curves of one pyramid level (values in (0,1))."""

    audio: np.ndarray   # learned from the audio stream, applied to visual
    visual: np.ndarray  # learned from the visual stream, applied to audio


@dataclass
class ForwardResult:
    levels: list[LevelOutput]
    gates: list[GatePair]


def level_valid_lengths(valid_len: int, num_levels: int) -> list[int]:
    """Valid timesteps per level; stride-2 halving keeps any partial step."""
    out = [valid_len]
    for _ in range(num_levels - 1):
        out.append(math.ceil(out[-1] / 2))
    return out


def _level_masks(length: int, valid: list[int], num_levels: int) -> list[np.ndarray]:
    masks = []
    t = length
    for lvl in range(num_levels):
        m = np.zeros(t, dtype=bool)
        m[: valid[lvl]] = True
        masks.append(m)
        t //= 2
    return masks


def sinusoidal_positions(length: int, dim: int, dtype) -> np.ndarray:
    """Standard fixed sin/cos position table, [length, dim]."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, idx / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : table[:, 1::2].shape[1]])
    return table.astype(dtype)


class ModalityEmbedder(Module):
    """Two projection convolutions then masked self-attention blocks.

    Fixed sinusoidal positions are added after the projections; without
    them the global attention layers are permutation-equivariant and
    boundary regression has nothing to anchor to.
    """

    def __init__(self, rng, in_dim: int, cfg: ModelConfig, dtype):
        d = cfg.embed_dim
        self.proj1 = Conv1d(rng, in_dim, d, kernel=3, dtype=dtype)
        self.proj2 = Conv1d(rng, d, d, kernel=3, dtype=dtype)
        self.positions = (
            sinusoidal_positions(cfg.max_len, d, dtype) if cfg.positional_encoding else None
        )
        self.blocks = [
            TransformerBlock(rng, d, cfg.num_heads, dtype, cfg.layer_norm, cfg.ffn_ratio)
            for _ in range(cfg.embed_depth)
        ]

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = mask_rows(x, mask)  # padded rows must not leak through the convs
        h = mask_rows(self.proj1(h).relu(), mask)
        h = mask_rows(self.proj2(h), mask)
        if self.positions is not None:
            h = mask_rows(h + self.positions, mask)
        for block in self.blocks:
            h = block(h, mask)
        return h


class ExchangeDirection(Module):
    """Residual cross-attention updating one modality from the other,
    followed by its feed-forward sublayer."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        d = cfg.embed_dim
        self.use_ln = cfg.layer_norm
        self.ln_q = LayerNorm(d, dtype) if cfg.layer_norm else None
        self.ln_kv = LayerNorm(d, dtype) if cfg.layer_norm else None
        self.attn = Attention(rng, d, cfg.num_heads, dtype)
        self.ln_ffn = LayerNorm(d, dtype) if cfg.layer_norm else None
        self.ffn = FeedForward(rng, d, dtype, ratio=cfg.ffn_ratio)
        self.swap_roles = cfg.swap_cross_roles

    def __call__(self, own: Tensor, other: Tensor, mask: np.ndarray) -> Tensor:
        # Default reading: the counterpart modality supplies the query while
        # own features act as key/value and residual base.
        query_src, kv_src = (own, other) if self.swap_roles else (other, own)
        q = self.ln_q(query_src) if self.use_ln else query_src
        kv = self.ln_kv(kv_src) if self.use_ln else kv_src
        h = own + self.attn(q, kv, kv, key_mask=mask)
        h = h + self.ffn(self.ln_ffn(h) if self.use_ln else h)
        return mask_rows(h, mask)


class GateBranch(Module):
    """Intra-modal attention -> linear -> sigmoid: one weight per timestep."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        d = cfg.embed_dim
        self.use_ln = cfg.layer_norm
        self.ln = LayerNorm(d, dtype) if cfg.layer_norm else None
        self.attn = Attention(rng, d, cfg.num_heads, dtype)
        self.proj = Linear(rng, d, 1, dtype)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.ln(x) if self.use_ln else x
        h = self.attn(h, h, h, key_mask=mask)
        return self.proj(h).sigmoid()  # [T, 1]


class PyramidStage(Module):
    """One pyramid layer: entry downsampling, exchange, consistency gates."""

    def __init__(self, rng, cfg: ModelConfig, level: int, dtype):
        d = cfg.embed_dim
        stride = 1 if level == 0 else 2
        self.down_a = Conv1d(rng, d, d, kernel=3, dtype=dtype, stride=stride)
        self.down_v = Conv1d(rng, d, d, kernel=3, dtype=dtype, stride=stride)
        self.cross_attn = cfg.cross_attn
        self.temporal_gate = cfg.temporal_gate
        self.apply_gate_a = cfg.temporal_gate and cfg.gate_modalities in ("both", "audio_only")
        self.apply_gate_v = cfg.temporal_gate and cfg.gate_modalities in ("both", "visual_only")
        if cfg.cross_attn:
            self.exchange_a = ExchangeDirection(rng, cfg, dtype)
            self.exchange_v = ExchangeDirection(rng, cfg, dtype)
        if self.apply_gate_a:
            self.gate_a = GateBranch(rng, cfg, dtype)
        if self.apply_gate_v:
            self.gate_v = GateBranch(rng, cfg, dtype)

    def __call__(self, fa: Tensor, fv: Tensor, mask: np.ndarray):
        fa = mask_rows(self.down_a(fa), mask)
        fv = mask_rows(self.down_v(fv), mask)

        if self.cross_attn:
            fa_hat = self.exchange_a(fa, fv, mask)
            fv_hat = self.exchange_v(fv, fa, mask)
        else:
            fa_hat, fv_hat = fa, fv

        t = fa.shape[0]
        half = np.full(t, 0.5, dtype=fa.dtype)
        gate_a_curve, gate_v_curve = half, half
        if self.apply_gate_v:
            g_v = self.gate_v(fv, mask)           # from pre-exchange visual
            fa_hat = mask_rows(fa_hat + g_v * fa_hat, mask)
            gate_v_curve = g_v.data[:, 0].copy()
        if self.apply_gate_a:
            g_a = self.gate_a(fa, mask)           # from pre-exchange audio
            fv_hat = mask_rows(fv_hat + g_a * fv_hat, mask)
            gate_a_curve = g_a.data[:, 0].copy()

        return fa_hat, fv_hat, GatePair(audio=gate_a_curve, visual=gate_v_curve)


class CoarseToFine(Module):
    """Update each level by querying it with time-upsampled coarser features."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        lengths = cfg.level_lengths()
        last = cfg.num_levels - 1
        self.sources: list[list[int]] = []
        self.time_maps: list[list[Parameter]] = []
        self.attn: list[Attention] = []
        width = 2 * cfg.embed_dim
        for k in range(last):
            src = [k + 1] if cfg.fusion_scope == "adjacent" else list(range(k + 1, last + 1))
            self.sources.append(src)
            self.time_maps.append([
                Parameter(xavier(rng, (lengths[k], lengths[l]), lengths[l], lengths[k], dtype))
                for l in src
            ])
            self.attn.append(Attention(rng, width, cfg.num_heads, dtype))

    def __call__(self, z: list[Tensor], masks: list[np.ndarray]) -> list[Tensor]:
        out = []
        for k, (maps, src) in enumerate(zip(self.time_maps, self.sources)):
            u = maps[0] @ z[src[0]]
            for w, l in zip(maps[1:], src[1:]):
                u = u + w @ z[l]
            u = mask_rows(u.relu(), masks[k])
            g = self.attn[k](u, z[k], z[k], key_mask=masks[k])
            out.append(mask_rows(g, masks[k]))
        out.append(z[-1])
        return out


class LevelEncoder(Module):
    """Independent self-attention stacks, one per pyramid level."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        width = 2 * cfg.embed_dim
        self.stacks = [
            [
                TransformerBlock(rng, width, cfg.num_heads, dtype, cfg.layer_norm, cfg.ffn_ratio)
                for _ in range(cfg.level_encoder_depth)
            ]
            for _ in range(cfg.num_levels)
        ]

    def __call__(self, feats: list[Tensor], masks: list[np.ndarray]) -> list[Tensor]:
        out = []
        for x, mask, stack in zip(feats, masks, self.stacks):
            for block in stack:
                x = block(x, mask)
            out.append(x)
        return out


class FineToCoarse(Module):
    """Chain residual attention from pooled finer levels into coarser ones."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        width = 2 * cfg.embed_dim
        self.scope = cfg.fusion_scope
        self.attn = [Attention(rng, width, cfg.num_heads, dtype) for _ in range(cfg.num_levels - 1)]

    def __call__(self, g: list[Tensor], masks: list[np.ndarray]) -> list[Tensor]:
        out = [g[0]]
        for m in range(1, len(g)):
            if self.scope == "adjacent":
                pooled = maxpool1d(out[m - 1], window=2, stride=2)
            else:
                pooled = maxpool1d(out[0], window=2 ** m, stride=2 ** m)
                for l in range(1, m):
                    factor = 2 ** (m - l)
                    pooled = pooled + maxpool1d(out[l], window=factor, stride=factor)
            o = g[m] + self.attn[m - 1](g[m], pooled, pooled, key_mask=masks[m])
            out.append(mask_rows(o, masks[m]))
        return out


class PredictionHeads(Module):
    """Shared three-conv classification and regression heads."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        width = 2 * cfg.embed_dim
        c = cfg.num_classes
        self.num_classes = c
        self.cls = [
            Conv1d(rng, width, width, kernel=3, dtype=dtype),
            Conv1d(rng, width, width, kernel=3, dtype=dtype),
            Conv1d(rng, width, c, kernel=3, dtype=dtype),
        ]
        self.reg = [
            Conv1d(rng, width, width, kernel=3, dtype=dtype),
            Conv1d(rng, width, width, kernel=3, dtype=dtype),
            Conv1d(rng, width, 2 * c, kernel=3, dtype=dtype),
        ]
        # Bias the classifier toward "no event" so early focal loss is small.
        self.cls[-1].b.data[:] = -math.log((1.0 - CLS_PRIOR) / CLS_PRIOR)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = self.cls[1](self.cls[0](x).relu()).relu()
        probs = self.cls[2](h).sigmoid()                      # [T, C]
        h = self.reg[1](self.reg[0](x).relu()).relu()
        offsets = self.reg[2](h).relu()                       # [T, 2C]
        t = offsets.shape[0]
        offsets = offsets.reshape(t, 2, self.num_classes).transpose(1, 2, 0)  # [2, C, T]
        return probs, offsets


class LocalizerNetwork(Module):
    """Full detector; one instance is confined to a single execution context."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)
        self.audio_embed = ModalityEmbedder(rng, cfg.audio_dim, cfg, dtype)
        self.visual_embed = ModalityEmbedder(rng, cfg.visual_dim, cfg, dtype)
        self.stages = [PyramidStage(rng, cfg, level, dtype) for level in range(cfg.num_levels)]
        self.c2f = CoarseToFine(rng, cfg, dtype) if cfg.coarse_to_fine else None
        self.level_encoder = LevelEncoder(rng, cfg, dtype)
        self.f2c = FineToCoarse(rng, cfg, dtype) if cfg.fine_to_coarse else None
        self.heads = PredictionHeads(rng, cfg, dtype)
        self.assign_parameter_names()

    # -- forward -----------------------------------------------------------

    def _check_inputs(self, audio: FeatureSequence, visual: FeatureSequence) -> None:
        cfg = self.cfg
        if audio.dim != cfg.audio_dim:
            raise ConfigurationError(f"audio feature dim {audio.dim} != model.audio_dim {cfg.audio_dim}")
        if visual.dim != cfg.visual_dim:
            raise ConfigurationError(f"visual feature dim {visual.dim} != model.visual_dim {cfg.visual_dim}")
        if audio.length != cfg.max_len or visual.length != cfg.max_len:
            raise ConfigurationError(
                f"sequences must be padded/cropped to max_len={cfg.max_len}, "
                f"got {audio.length} and {visual.length}"
            )
        if audio.valid_len != visual.valid_len:
            raise ConfigurationError("modality valid lengths differ")

    def forward(self, audio: FeatureSequence, visual: FeatureSequence) -> ForwardResult:
        self._check_inputs(audio, visual)
        cfg = self.cfg
        valid = level_valid_lengths(audio.valid_len, cfg.num_levels)
        masks = _level_masks(cfg.max_len, valid, cfg.num_levels)

        fa = self.audio_embed(Tensor(audio.values.astype(self.dtype, copy=False)), masks[0])
        fv = self.visual_embed(Tensor(visual.values.astype(self.dtype, copy=False)), masks[0])

        pyramid: list[Tensor] = []
        gates: list[GatePair] = []
        for level, stage in enumerate(self.stages):
            fa, fv, gate = stage(fa, fv, masks[level])
            pyramid.append(concat([fa, fv], axis=1))  # audio channels first
            gates.append(gate)

        feats = pyramid
        if cfg.mix_order == "c2f_first":
            if self.c2f is not None:
                feats = self.c2f(feats, masks)
            feats = self.level_encoder(feats, masks)
            if self.f2c is not None:
                feats = self.f2c(feats, masks)
        else:
            if self.f2c is not None:
                feats = self.f2c(feats, masks)
            feats = self.level_encoder(feats, masks)
            if self.c2f is not None:
                feats = self.c2f(feats, masks)

        levels = []
        for l, x in enumerate(feats):
            probs, offsets = self.heads(x)
            levels.append(
                LevelOutput(level=l, stride=2 ** l, valid_len=valid[l], probs=probs, offsets=offsets)
            )
        return ForwardResult(levels=levels, gates=gates)

    __call__ = forward
