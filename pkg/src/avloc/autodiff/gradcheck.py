"""Central finite-difference verification of analytic gradients.

Run in float64; float32 round-off swamps the O(h^2) truncation error.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .tensor import Parameter


def finite_difference_error(
    fn,
    params: Parameter | Sequence[Parameter],
    h: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and numeric gradients of ``fn``.

    ``fn`` is a deterministic zero-argument callable rebuilding the forward
    graph and returning a scalar Tensor. For every checked coordinate the
    numeric gradient is (f(x+h) - f(x-h)) / 2h and the error is
    |a - n| / max(|a|, |n|, 1e-8). When ``max_coords`` is given, at most
    that many coordinates per parameter are sampled (seeded, reproducible).
    """
    if isinstance(params, Parameter):
        params = [params]
    for p in params:
        p.zero_grad()
    fn().backward()
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = fn().item()
            flat[i] = orig - h
            f_minus = fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
