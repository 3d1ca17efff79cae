"""tIoU matching, average precision, mAP and duration-bucket precision.

Predictions are matched greedily (descending score) to the unmatched
ground truth of the same video with the highest overlap at or above the
threshold; AP integrates the interpolated precision-recall envelope.
Classes without any ground truth are excluded from the mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import EventAnnotation
from .errors import ConfigurationError
from .postprocess import LocalizedEvent

FULL_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(1, 10))      # 0.1 .. 0.9
REPORT_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(5, 10))    # 0.5 .. 0.9
DEFAULT_BUCKETS = ((0.0, 5.0), (5.0, 20.0), (20.0, 60.0))
BUCKET_NAMES = ("short", "mid", "long")


def tiou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Temporal intersection over union; 0 when disjoint.

    Zero-length intervals overlap nothing, except that two identical
    degenerate intervals count as a perfect match.
    """
    (a0, a1), (b0, b1) = a, b
    la, lb = a1 - a0, b1 - b0
    if la <= 0 or lb <= 0:
        return 1.0 if (a0, a1) == (b0, b1) else 0.0
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = la + lb - inter
    return inter / union if union > 0 else 0.0


@dataclass
class ScoredSegment:
    """One prediction of a single class, tagged with its video."""

    video_id: str
    t_start: float
    t_end: float
    score: float


@dataclass
class GtSegment:
    video_id: str
    t_start: float
    t_end: float


def average_precision(
    preds: list[ScoredSegment],
    gts: list[GtSegment],
    threshold: float,
    interpolation: str = "all_points",
) -> float | None:
    """AP of one class at one tIoU threshold; None when no ground truth."""
    if not gts:
        return None
    if not preds:
        return 0.0
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, preds[i].t_start))
    gt_by_video: dict[str, list[int]] = {}
    for j, gt in enumerate(gts):
        gt_by_video.setdefault(gt.video_id, []).append(j)
    matched = [False] * len(gts)
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        p = preds[i]
        best_j, best_ov = -1, 0.0
        for j in gt_by_video.get(p.video_id, ()):
            if matched[j]:
                continue
            ov = tiou((p.t_start, p.t_end), (gts[j].t_start, gts[j].t_end))
            # highest overlap at/above threshold wins; ties keep the earlier gt
            if ov >= threshold and ov > best_ov:
                best_j, best_ov = j, ov
        if best_j >= 0:
            matched[best_j] = True
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(order) + 1)
    recall = cum_tp / len(gts)
    if interpolation == "eleven_point":
        ap = 0.0
        for r in np.linspace(0.0, 1.0, 11):
            mask = recall >= r
            ap += precision[mask].max() if mask.any() else 0.0
        return ap / 11.0
    # all-points: area under the right-continuous precision envelope
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


@dataclass
class EvalReport:
    map_at: dict[float, float]               # report thresholds -> mAP
    average_map: float                       # mean over the nine thresholds
    per_class_ap: dict[int, dict[float, float | None]]
    bucket_precision: dict[str, float | None]
    num_videos: int = 0
    num_gt_events: int = 0
    extras: dict[str, float] = field(default_factory=dict)


def _collect_by_class(
    preds_by_video: dict[str, list[LocalizedEvent]],
    gts_by_video: dict[str, list[EventAnnotation]],
    num_classes: int,
) -> tuple[list[list[ScoredSegment]], list[list[GtSegment]]]:
    preds: list[list[ScoredSegment]] = [[] for _ in range(num_classes)]
    gts: list[list[GtSegment]] = [[] for _ in range(num_classes)]
    for vid, events in gts_by_video.items():
        for ev in events:
            gts[ev.class_id].append(GtSegment(vid, ev.t_start, ev.t_end))
    for vid, events in preds_by_video.items():
        for ev in events:
            if 0 <= ev.class_id < num_classes:
                preds[ev.class_id].append(ScoredSegment(vid, ev.t_start, ev.t_end, ev.score))
    return preds, gts


def evaluate(
    preds_by_video: dict[str, list[LocalizedEvent]],
    gts_by_video: dict[str, list[EventAnnotation]],
    num_classes: int,
    seconds_per_timestep: float = 1.0,
    thresholds: tuple[float, ...] = FULL_THRESHOLDS,
    report_thresholds: tuple[float, ...] = REPORT_THRESHOLDS,
    interpolation: str = "all_points",
) -> EvalReport:
    """Full scoring pass: per-class AP, per-threshold mAP, average mAP, buckets."""
    num_gt = sum(len(v) for v in gts_by_video.values())
    if num_gt == 0:
        raise ConfigurationError("cannot evaluate: ground-truth set is empty")
    preds, gts = _collect_by_class(preds_by_video, gts_by_video, num_classes)
    per_class: dict[int, dict[float, float | None]] = {}
    map_by_threshold: dict[float, float] = {}
    for thr in sorted(set(thresholds) | set(report_thresholds)):
        vals = []
        for c in range(num_classes):
            ap = average_precision(preds[c], gts[c], thr, interpolation)
            per_class.setdefault(c, {})[thr] = ap
            if ap is not None:
                vals.append(ap)
        map_by_threshold[thr] = float(np.mean(vals)) if vals else 0.0
    average_map = float(np.mean([map_by_threshold[t] for t in thresholds]))
    buckets = duration_bucket_precision(
        preds_by_video, gts_by_video, seconds_per_timestep=seconds_per_timestep
    )
    return EvalReport(
        map_at={t: map_by_threshold[t] for t in report_thresholds},
        average_map=average_map,
        per_class_ap=per_class,
        bucket_precision=buckets,
        num_videos=len(gts_by_video),
        num_gt_events=num_gt,
    )


def duration_bucket_precision(
    preds_by_video: dict[str, list[LocalizedEvent]],
    gts_by_video: dict[str, list[EventAnnotation]],
    buckets: tuple[tuple[float, float], ...] = DEFAULT_BUCKETS,
    threshold: float = 0.5,
    seconds_per_timestep: float = 1.0,
) -> dict[str, float | None]:
    """Fraction of ground-truth events per duration bucket that some
    same-class prediction localizes with tIoU strictly above the threshold.

    Buckets are (lo, hi] in seconds; empty buckets report None.
    """
    names = BUCKET_NAMES if len(buckets) == len(BUCKET_NAMES) else [
        f"bucket_{i}" for i in range(len(buckets))
    ]
    correct = {name: 0 for name in names}
    total = {name: 0 for name in names}
    for vid, events in gts_by_video.items():
        preds = preds_by_video.get(vid, [])
        for ev in events:
            dur = ev.duration * seconds_per_timestep
            name = None
            for (lo, hi), n in zip(buckets, names):
                if lo < dur <= hi:
                    name = n
                    break
            if name is None:
                continue
            total[name] += 1
            hit = any(
                p.class_id == ev.class_id
                and tiou((p.t_start, p.t_end), (ev.t_start, ev.t_end)) > threshold
                for p in preds
            )
            if hit:
                correct[name] += 1
    return {
        name: (correct[name] / total[name] if total[name] else None) for name in names
    }


def format_report(report: EvalReport) -> str:
    """Human-readable table."""
    lines = ["threshold  mAP"]
    for thr in sorted(report.map_at):
        lines.append(f"   {thr:.1f}     {report.map_at[thr]:.4f}")
    lines.append(f"average mAP (0.1:0.9): {report.average_map:.4f}")
    lines.append("")
    lines.append("duration-bucket precision @0.5:")
    for name, value in report.bucket_precision.items():
        shown = "n/a" if value is None else f"{value:.4f}"
        lines.append(f"  {name:>5}: {shown}")
    lines.append("")
    lines.append(f"videos: {report.num_videos}, ground-truth events: {report.num_gt_events}")
    return "\n".join(lines)


def report_keyvalues(report: EvalReport) -> str:
    """Machine-readable key=value block."""
    lines = []
    for thr in sorted(report.map_at):
        lines.append(f"map@{thr:.1f}={report.map_at[thr]:.6f}")
    lines.append(f"map_avg={report.average_map:.6f}")
    for name, value in report.bucket_precision.items():
        lines.append(f"bucket_{name}={'nan' if value is None else f'{value:.6f}'}")
    return "\n".join(lines)
