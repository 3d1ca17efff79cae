"""Training objective: focal classification + 1D generalized-IoU regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, maximum, minimum
from ..model.network import LevelOutput
from .targets import TargetAssignment

PROB_EPS = 1e-7
LENGTH_EPS = 1e-9


@dataclass
class LossWeights:
    cls_weight: float = 1.0   # weight on the classification term
    reg_weight: float = 1.0   # weight on the regression term
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25


@dataclass
class LossBreakdown:
    total: float
    cls: float
    reg: float
    num_positives: int
    skipped_zero_length: int = 0


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def focal_loss(
    probs,
    targets: np.ndarray,
    gamma: float = 2.0,
    alpha: float = 0.25,
    valid_mask: np.ndarray | None = None,
    normalizer: float | None = None,
) -> Tensor:
    """Focal loss summed over all entries, divided by the positive count.

    ``probs`` holds sigmoid outputs, ``targets`` binary labels of the same
    shape. ``valid_mask`` (broadcastable) excludes padded timesteps;
    ``normalizer`` overrides the default max(1, #positives).
    """
    probs = _as_tensor(probs)
    y = np.asarray(targets, dtype=np.float64)
    p = probs.clamp(PROB_EPS, 1.0 - PROB_EPS)
    pos = ((1.0 - p) ** gamma) * p.log() * (-alpha)
    neg = (p ** gamma) * (1.0 - p).log() * (alpha - 1.0)
    elem = pos * y + neg * (1.0 - y)
    if valid_mask is not None:
        elem = elem * valid_mask.astype(np.float64)
    if normalizer is None:
        normalizer = max(1.0, float(y.sum()))
    return elem.sum() * (1.0 / normalizer)


def giou_loss_1d(
    pred: tuple,
    target: tuple,
    mask: np.ndarray | None = None,
    normalizer: float | None = None,
) -> Tensor:
    """1 - IoU between offset-anchored segments, averaged over positives.

    ``pred`` and ``target`` are (onset, offset) distance pairs; both segments
    contain the anchor, so their hull equals their union and the generalized
    IoU penalty term vanishes.
    """
    ds_p, de_p = (_as_tensor(v) for v in pred)
    ds_t = np.asarray(target[0], dtype=np.float64)
    de_t = np.asarray(target[1], dtype=np.float64)
    inter = minimum(ds_p, Tensor._coerce(ds_t)) + minimum(de_p, Tensor._coerce(de_t))
    union = maximum(ds_p, Tensor._coerce(ds_t)) + maximum(de_p, Tensor._coerce(de_t))
    loss = 1.0 - inter / union.clamp(lo=LENGTH_EPS)
    zero_len = (ds_t + de_t) <= 0
    if mask is None:
        effective = ~zero_len
    else:
        effective = np.asarray(mask, dtype=bool) & ~zero_len
    loss = loss * effective.astype(np.float64)
    if normalizer is None:
        normalizer = max(1.0, float(effective.sum()))
    return loss.sum() * (1.0 / normalizer)


def count_zero_length_targets(assignment: TargetAssignment) -> int:
    skipped = 0
    for lt in assignment.levels:
        zero_len = (lt.offsets[0] + lt.offsets[1]) <= 0
        skipped += int((zero_len & lt.mask.T).sum())
    return skipped


def total_loss(
    outputs: list[LevelOutput],
    assignment: TargetAssignment,
    weights: LossWeights,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum over levels of the two loss terms.

    Both terms are normalized by the total positive count (min 1); the
    regression term is exactly zero when no timestep is positive.
    """
    n_pos = max(1.0, float(assignment.num_positives))
    cls_term: Tensor | None = None
    reg_term: Tensor | None = None
    skipped = count_zero_length_targets(assignment)
    for out, lt in zip(outputs, assignment.levels):
        valid = (np.arange(out.probs.shape[0]) < out.valid_len)[:, None]
        piece = focal_loss(
            out.probs, lt.cls,
            gamma=weights.focal_gamma, alpha=weights.focal_alpha,
            valid_mask=valid, normalizer=n_pos,
        )
        cls_term = piece if cls_term is None else cls_term + piece
        if lt.mask.any():
            piece = giou_loss_1d(
                (out.offsets[0], out.offsets[1]),
                (lt.offsets[0], lt.offsets[1]),
                mask=lt.mask.T,
                normalizer=n_pos,
            )
            reg_term = piece if reg_term is None else reg_term + piece
    if reg_term is None:
        reg_term = Tensor(np.zeros((), dtype=np.float64))
    total = cls_term * weights.cls_weight + reg_term * weights.reg_weight
    breakdown = LossBreakdown(
        total=total.item(),
        cls=cls_term.item() * weights.cls_weight,
        reg=reg_term.item() * weights.reg_weight,
        num_positives=assignment.num_positives,
        skipped_zero_length=skipped,
    )
    return total, breakdown
