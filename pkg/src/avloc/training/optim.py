"""Bias-corrected Adam with decoupled weight decay and optional warmup."""

from __future__ import annotations

import math

import numpy as np

from ..autodiff import Parameter
from ..errors import GradientError


class Adam:
    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-4,
        weight_decay: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        warmup_steps: int = 0,
    ):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.warmup_steps = warmup_steps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def current_lr(self) -> float:
        if self.warmup_steps > 0 and self.step_count < self.warmup_steps:
            return self.lr * (self.step_count + 1) / self.warmup_steps
        return self.lr

    def step(self) -> None:
        lr_t = self.current_lr()
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise GradientError(f"non-finite gradient in parameter {p.name!r}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= (lr_t * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)
            if self.weight_decay:
                p.data -= (lr_t * self.weight_decay) * p.data

    # -- checkpoint support -------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for p, m, v in zip(self.params, self.m, self.v):
            out[f"m.{p.name}"] = m
            out[f"v.{p.name}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for i, p in enumerate(self.params):
            m = arrays.get(f"m.{p.name}")
            v = arrays.get(f"v.{p.name}")
            if m is not None:
                self.m[i] = m.astype(p.data.dtype).reshape(p.data.shape)
            if v is not None:
                self.v[i] = v.astype(p.data.dtype).reshape(p.data.shape)
        self.step_count = step_count
