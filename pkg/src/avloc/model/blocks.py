"""Parameterized building blocks on top of the autodiff engine."""

from __future__ import annotations

import math
from collections.abc import Iterator

import numpy as np

from ..autodiff import Parameter, Tensor, conv1d, layer_norm, multi_head_attention


class Module:
    """Container with recursive parameter discovery in attribute order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            yield from _walk(name, value)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def assign_parameter_names(self, prefix: str = "") -> None:
        for name, p in self.named_parameters(prefix):
            p.name = name


def _walk(name: str, value) -> Iterator[tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(f"{name}.{i}", item)


def xavier(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, dtype, bias: bool = True):
        self.w = Parameter(xavier(rng, (d_in, d_out), d_in, d_out, dtype))
        self.b = Parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.w
        return out + self.b if self.b is not None else out


class Conv1d(Module):
    def __init__(self, rng, c_in: int, c_out: int, kernel: int, dtype,
                 stride: int = 1, padding: int | None = None):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        fan_in, fan_out = kernel * c_in, kernel * c_out
        self.w = Parameter(xavier(rng, (kernel, c_in, c_out), fan_in, fan_out, dtype))
        self.b = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class FeedForward(Module):
    """Two-layer position-wise MLP (hidden = ratio * dim, ReLU)."""

    def __init__(self, rng, dim: int, dtype, ratio: int = 4):
        self.fc1 = Linear(rng, dim, ratio * dim, dtype)
        self.fc2 = Linear(rng, ratio * dim, dim, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())


class Attention(Module):
    """Multi-head attention with combined per-head projection matrices.

    No bias on the key projection: a constant key offset shifts every
    logit of a query equally and cancels in the softmax, so the parameter
    would be unreachable by any gradient.
    """

    def __init__(self, rng, dim: int, num_heads: int, dtype):
        self.num_heads = num_heads
        self.wq = Parameter(xavier(rng, (dim, dim), dim, dim, dtype))
        self.wk = Parameter(xavier(rng, (dim, dim), dim, dim, dtype))
        self.wv = Parameter(xavier(rng, (dim, dim), dim, dim, dtype))
        self.wo = Parameter(xavier(rng, (dim, dim), dim, dim, dtype))
        self.bq = Parameter(np.zeros(dim, dtype=dtype))
        self.bv = Parameter(np.zeros(dim, dtype=dtype))
        self.bo = Parameter(np.zeros(dim, dtype=dtype))

    def __call__(self, q: Tensor, k: Tensor, v: Tensor,
                 key_mask: np.ndarray | None = None, return_weights: bool = False):
        return multi_head_attention(
            q, k, v, self.wq, self.wk, self.wv, self.wo, self.num_heads,
            bq=self.bq, bv=self.bv, bo=self.bo,
            key_mask=key_mask, return_weights=return_weights,
        )


class TransformerBlock(Module):
    """Pre-norm self-attention + feed-forward; padded rows stay zero."""

    def __init__(self, rng, dim: int, num_heads: int, dtype,
                 use_layer_norm: bool = True, ffn_ratio: int = 4):
        self.use_layer_norm = use_layer_norm
        self.ln1 = LayerNorm(dim, dtype) if use_layer_norm else None
        self.attn = Attention(rng, dim, num_heads, dtype)
        self.ln2 = LayerNorm(dim, dtype) if use_layer_norm else None
        self.ffn = FeedForward(rng, dim, dtype, ratio=ffn_ratio)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.ln1(x) if self.use_layer_norm else x
        x = x + self.attn(h, h, h, key_mask=mask)
        h = self.ln2(x) if self.use_layer_norm else x
        x = x + self.ffn(h)
        return mask_rows(x, mask)


def mask_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Zero out rows where mask is False. No-op when everything is valid."""
    if mask.all():
        return x
    return x * mask.astype(x.dtype)[:, None]
