"""Turn per-timestep predictions into scored intervals and suppress duplicates.

Decoding emits, for every level, timestep and class above the score
threshold, the interval

    [t*stride - d_s*stride,  t*stride + d_e*stride]

clipped to the video's valid extent. Soft-NMS then decays (or, in hard
mode, removes) highly overlapping same-class detections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model.network import ForwardResult

NMS_METHODS = ("gaussian", "linear", "hard")
DECODE_MODES = ("multi_label", "argmax")


@dataclass
class LocalizedEvent:
    t_start: float
    t_end: float
    class_id: int
    score: float


@dataclass
class SoftNmsConfig:
    method: str = "gaussian"
    sigma: float = 0.9
    iou_threshold: float = 0.5
    score_floor: float = 0.001
    pre_nms_topk: int = 2000
    max_outputs: int = 200

    def __post_init__(self):
        if self.method not in NMS_METHODS:
            raise ConfigurationError(f"nms.method must be one of {NMS_METHODS}, got {self.method!r}")
        if self.method == "gaussian" and self.sigma <= 0:
            raise ConfigurationError(f"nms.sigma must be > 0, got {self.sigma}")
        if not 0.0 <= self.score_floor < 1.0:
            raise ConfigurationError(f"nms.score_floor must be in [0, 1), got {self.score_floor}")


@dataclass
class LevelPrediction:
    """Detached (plain numpy) predictions of one pyramid level."""

    stride: int
    valid_len: int
    probs: np.ndarray    # [T_l, C]
    offsets: np.ndarray  # [2, C, T_l]


def detach_result(result: ForwardResult) -> list[LevelPrediction]:
    return [
        LevelPrediction(
            stride=lo.stride, valid_len=lo.valid_len,
            probs=lo.probs.data, offsets=lo.offsets.data,
        )
        for lo in result.levels
    ]


def decode_predictions(
    levels: list[LevelPrediction],
    valid_len: int,
    score_threshold: float = 0.01,
    topk: int = 2000,
    mode: str = "multi_label",
) -> list[LocalizedEvent]:
    """Threshold per-timestep probabilities and invert offsets to intervals.

    ``multi_label`` keeps every class above the threshold (concurrent
    events); ``argmax`` keeps only each timestep's best class.
    """
    if mode not in DECODE_MODES:
        raise ConfigurationError(f"decode mode must be one of {DECODE_MODES}, got {mode!r}")
    out: list[LocalizedEvent] = []
    for level in levels:
        v = level.valid_len
        if v == 0:
            continue
        probs = level.probs[:v]
        keep = probs >= score_threshold
        if mode == "argmax":
            best = probs.argmax(axis=1)
            only_best = np.zeros_like(keep)
            only_best[np.arange(v), best] = True
            keep &= only_best
        ts, cs = np.nonzero(keep)
        if ts.size == 0:
            continue
        d_s = level.offsets[0, cs, ts]
        d_e = level.offsets[1, cs, ts]
        t_full = ts.astype(np.float64) * level.stride
        starts = np.maximum(t_full - d_s * level.stride, 0.0)
        ends = np.minimum(t_full + d_e * level.stride, float(valid_len))
        scores = probs[ts, cs]
        for s, e, c, sc in zip(starts, ends, cs, scores):
            if e > s:
                out.append(LocalizedEvent(float(s), float(e), int(c), float(sc)))
    out.sort(key=lambda ev: (-ev.score, ev.t_start, ev.class_id))
    return out[:topk]


def _interval_iou(a_start, a_end, b_start, b_end):
    inter = np.minimum(a_end, b_end) - np.maximum(a_start, b_start)
    inter = np.maximum(inter, 0.0)
    union = (a_end - a_start) + (b_end - b_start) - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def soft_nms(events: list[LocalizedEvent], cfg: SoftNmsConfig) -> list[LocalizedEvent]:
    """Per-class iterative suppression; never raises a score.

    gaussian: s <- s * exp(-iou^2 / sigma) for every overlapping event;
    linear:   s <- s * (1 - iou) when iou > iou_threshold;
    hard:     remove when iou > iou_threshold (classic NMS).
    """
    kept: list[LocalizedEvent] = []
    by_class: dict[int, list[LocalizedEvent]] = {}
    for ev in events:
        by_class.setdefault(ev.class_id, []).append(ev)
    for class_id in sorted(by_class):
        group = by_class[class_id]
        starts = np.array([ev.t_start for ev in group])
        ends = np.array([ev.t_end for ev in group])
        scores = np.array([ev.score for ev in group])
        alive = np.ones(len(group), dtype=bool)
        while alive.any():
            live_idx = np.nonzero(alive)[0]
            live_scores = scores[live_idx]
            best_pos = np.lexsort((starts[live_idx], -live_scores))[0]
            i = live_idx[best_pos]
            kept.append(LocalizedEvent(float(starts[i]), float(ends[i]), class_id, float(scores[i])))
            alive[i] = False
            rest = np.nonzero(alive)[0]
            if rest.size == 0:
                break
            ious = _interval_iou(starts[i], ends[i], starts[rest], ends[rest])
            if cfg.method == "gaussian":
                scores[rest] *= np.exp(-(ious ** 2) / cfg.sigma)
            elif cfg.method == "linear":
                decay = np.where(ious > cfg.iou_threshold, 1.0 - ious, 1.0)
                scores[rest] *= decay
            else:  # hard
                alive[rest[ious > cfg.iou_threshold]] = False
            dead = rest[scores[rest] < cfg.score_floor]
            alive[dead] = False
    kept.sort(key=lambda ev: (-ev.score, ev.t_start, ev.class_id))
    return kept[: cfg.max_outputs]


def infer_events(
    result: ForwardResult,
    valid_len: int,
    nms: SoftNmsConfig | None = None,
    score_threshold: float = 0.01,
    mode: str = "multi_label",
) -> list[LocalizedEvent]:
    """decode + Soft-NMS in one call."""
    nms = nms or SoftNmsConfig()
    decoded = decode_predictions(
        detach_result(result), valid_len,
        score_threshold=score_threshold, topk=nms.pre_nms_topk, mode=mode,
    )
    return soft_nms(decoded, nms)


def targets_as_predictions(assignment, strides: list[int]) -> list[LevelPrediction]:
    """View a target assignment as perfect predictions (score 1 at positives)."""
    levels = []
    for lt, stride in zip(assignment.levels, strides):
        levels.append(
            LevelPrediction(
                stride=stride,
                valid_len=lt.cls.shape[0],
                probs=lt.cls.astype(np.float64),
                offsets=lt.offsets,
            )
        )
    return levels


def classic_nms(events: list[LocalizedEvent], iou_threshold: float) -> list[LocalizedEvent]:
    """Reference hard NMS used for equivalence checks."""
    kept = []
    by_class: dict[int, list[LocalizedEvent]] = {}
    for ev in events:
        by_class.setdefault(ev.class_id, []).append(ev)
    for class_id in sorted(by_class):
        group = sorted(by_class[class_id], key=lambda ev: (-ev.score, ev.t_start))
        while group:
            best = group.pop(0)
            kept.append(best)
            survivors = []
            for ev in group:
                inter = max(0.0, min(best.t_end, ev.t_end) - max(best.t_start, ev.t_start))
                union = (best.t_end - best.t_start) + (ev.t_end - ev.t_start) - inter
                iou = inter / union if union > 0 else 0.0
                if iou <= iou_threshold:
                    survivors.append(ev)
            group = survivors
    kept.sort(key=lambda ev: (-ev.score, ev.t_start, ev.class_id))
    return kept
