"""Structured differentiable operations on :class:`Tensor`.

Everything here has an analytic backward rule; each rule is exercised
against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError, ShapeError
from .tensor import Tensor


def softmax_lastdim(x: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis (max-subtraction)."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        x._accumulate(out_data * (g - dot))

    return Tensor._result(out_data, (x,), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    base = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(base):
            raise ShapeError(f"concat rank mismatch: {t.shape} vs {base}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor._result(out_data, tuple(tensors), backward)


def _pairwise_select(a: Tensor, b: Tensor, take_a: np.ndarray, out_data: np.ndarray) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(g * take_a)
        if b.requires_grad:
            b._accumulate(g * ~take_a)

    return Tensor._result(out_data, (a, b), backward)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient routes to the first operand."""
    a._check_binary(b, "minimum")
    take_a = a.data <= b.data
    return _pairwise_select(a, b, take_a, np.minimum(a.data, b.data))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient routes to the first operand."""
    a._check_binary(b, "maximum")
    take_a = a.data >= b.data
    return _pairwise_select(a, b, take_a, np.maximum(a.data, b.data))


def conv1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """1D cross-correlation of x[T, Cin] with w[K, Cin, Cout] plus bias[Cout].

    Output length is floor((T + 2*padding - K) / stride) + 1.
    """
    if x.ndim != 2 or w.ndim != 3:
        raise ShapeError(f"conv1d expects x[T,Cin] and w[K,Cin,Cout], got {x.shape} and {w.shape}")
    t_in, c_in = x.shape
    k, wc_in, c_out = w.shape
    if wc_in != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape} vs weight {w.shape}")
    if stride < 1:
        raise GeometryError(f"conv1d stride must be >= 1, got {stride}")
    t_out = (t_in + 2 * padding - k) // stride + 1
    if t_out < 1:
        raise GeometryError(
            f"conv1d output empty: T={t_in}, K={k}, stride={stride}, padding={padding}"
        )

    xp = np.pad(x.data, ((padding, padding), (0, 0))) if padding else x.data
    span = (t_out - 1) * stride + 1
    # cols[t', k, cin] = xp[t'*stride + k, cin]
    cols = np.stack([xp[j : j + span : stride] for j in range(k)], axis=1)
    wmat = w.data.reshape(k * c_in, c_out)
    out_data = cols.reshape(t_out, k * c_in) @ wmat
    if b is not None:
        out_data = out_data + b.data

    def backward(g):
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=0))
        if w.requires_grad:
            gw = cols.reshape(t_out, k * c_in).T @ g
            w._accumulate(gw.reshape(k, c_in, c_out))
        if x.requires_grad:
            gcols = (g @ wmat.T).reshape(t_out, k, c_in)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[j : j + span : stride] += gcols[:, j]
            x._accumulate(gxp[padding : padding + t_in] if padding else gxp)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._result(out_data, parents, backward)


def maxpool1d(x: Tensor, window: int, stride: int) -> Tensor:
    """Per-channel windowed maximum over x[T, C].

    The gradient routes to the first maximal position within each window.
    """
    if x.ndim != 2:
        raise ShapeError(f"maxpool1d expects x[T,C], got {x.shape}")
    t_in, c = x.shape
    if window > t_in:
        raise GeometryError(f"maxpool1d window {window} exceeds length {t_in}")
    if stride < 1 or window < 1:
        raise GeometryError(f"maxpool1d requires window, stride >= 1, got {window}, {stride}")
    t_out = (t_in - window) // stride + 1
    span = (t_out - 1) * stride + 1
    windows = np.stack([x.data[j : j + span : stride] for j in range(window)], axis=1)  # [T', W, C]
    arg = windows.argmax(axis=1)  # first occurrence on ties
    out_data = np.take_along_axis(windows, arg[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        gx = np.zeros_like(x.data)
        rows = np.arange(t_out)[:, None] * stride + arg
        np.add.at(gx, (rows.ravel(), np.tile(np.arange(c), t_out)), g.ravel())
        x._accumulate(gx)

    return Tensor._result(out_data, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gh = g * gamma.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gh - m1 - xhat * m2))

    return Tensor._result(out_data, (x, gamma, beta), backward)
