"""Scaled dot-product multi-head attention as a differentiable composite."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError, ShapeError
from .ops import softmax_lastdim
from .tensor import Tensor

MASK_BIAS = -1e9  # additive logit for padded keys; exp() underflows to exactly 0


def split_heads(x: Tensor, num_heads: int) -> Tensor:
    """[T, D] -> [H, T, D/H]."""
    t, d = x.shape
    return x.reshape(t, num_heads, d // num_heads).transpose(1, 0, 2)


def merge_heads(x: Tensor) -> Tensor:
    """[H, T, D/H] -> [T, D]."""
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    num_heads: int,
    bq: Tensor | None = None,
    bk: Tensor | None = None,
    bv: Tensor | None = None,
    bo: Tensor | None = None,
    key_mask: np.ndarray | None = None,
    return_weights: bool = False,
):
    """Multi-head attention of q[Tq, D] over (k, v)[Tk, D].

    Each head applies scaled dot-product attention with 1/sqrt(D/heads)
    scaling; head outputs are concatenated and projected by ``wo``.
    ``key_mask`` is a boolean validity mask over key positions; masked keys
    receive exactly zero attention weight.
    """
    d = q.shape[-1]
    if d % num_heads != 0:
        raise ConfigurationError(f"model width {d} not divisible by {num_heads} heads")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key/value lengths differ: {k.shape} vs {v.shape}")

    qp = split_heads(q @ wq + bq if bq is not None else q @ wq, num_heads)
    kp = split_heads(k @ wk + bk if bk is not None else k @ wk, num_heads)
    vp = split_heads(v @ wv + bv if bv is not None else v @ wv, num_heads)

    scale = 1.0 / math.sqrt(d // num_heads)
    logits = (qp @ kp.transpose(0, 2, 1)) * scale
    if key_mask is not None:
        bias = np.where(np.asarray(key_mask, dtype=bool), 0.0, MASK_BIAS)
        logits = logits + bias.astype(logits.dtype)[None, None, :]
    weights = softmax_lastdim(logits)

    out = merge_heads(weights @ vp) @ wo
    if bo is not None:
        out = out + bo
    if return_weights:
        return out, weights
    return out
