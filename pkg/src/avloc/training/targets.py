"""Ground-truth assignment across pyramid levels.

A timestep is positive for a class when it falls inside an event of that
class and the event's larger boundary distance lands in the level's
regression range; overlapping same-class events resolve to the nearer
center. Offsets are stored in level-stride units so that
``t*stride - d_s*stride`` reconstructs the source boundary exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import EventAnnotation
from ..errors import ConfigurationError
from ..model.config import ModelConfig
from ..model.network import level_valid_lengths


def default_regression_ranges(num_levels: int) -> list[tuple[float, float]]:
    """Doubling full-resolution ranges starting at 4; the last is unbounded."""
    bounds = [4.0 * (2 ** i) for i in range(num_levels - 1)]
    ranges: list[tuple[float, float]] = []
    lo = 0.0
    for hi in bounds:
        ranges.append((lo, hi))
        lo = hi
    ranges.append((lo, math.inf))
    return ranges


@dataclass
class LevelTargets:
    cls: np.ndarray       # [T_l, C] binary
    offsets: np.ndarray   # [2, C, T_l], level-stride units, float64
    mask: np.ndarray      # [T_l, C] bool, 1 where an event is assigned


@dataclass
class TargetAssignment:
    levels: list[LevelTargets]
    num_positives: int


def assign_targets(
    events: list[EventAnnotation],
    cfg: ModelConfig,
    ranges: list[tuple[float, float]] | None = None,
    valid_len: int | None = None,
    center_sampling: bool = False,
    center_radius: float = 1.5,
) -> TargetAssignment:
    if ranges is None:
        ranges = default_regression_ranges(cfg.num_levels)
    if len(ranges) != cfg.num_levels:
        raise ConfigurationError(
            f"{len(ranges)} regression ranges for {cfg.num_levels} levels"
        )
    limit = cfg.max_len if valid_len is None else valid_len
    for i, ev in enumerate(events):
        if ev.t_start < 0 or ev.t_end > limit:
            raise ConfigurationError(
                f"event {i} [{ev.t_start}, {ev.t_end}] outside [0, {limit})"
            )
    if cfg.num_classes > 0:
        for i, ev in enumerate(events):
            if ev.class_id >= cfg.num_classes:
                raise ConfigurationError(f"event {i} class {ev.class_id} >= {cfg.num_classes}")

    valid = level_valid_lengths(limit, cfg.num_levels)
    c = cfg.num_classes
    levels: list[LevelTargets] = []
    total_pos = 0
    for lvl, (length, stride) in enumerate(zip(cfg.level_lengths(), cfg.level_strides())):
        lo, hi = ranges[lvl]
        pos = np.arange(length, dtype=np.float64) * stride
        in_valid = np.arange(length) < valid[lvl]
        cls = np.zeros((length, c), dtype=np.float64)
        mask = np.zeros((length, c), dtype=bool)
        offsets = np.zeros((2, c, length), dtype=np.float64)
        best = np.full((length, c), np.inf)
        for ev in events:
            d_s = pos - ev.t_start
            d_e = ev.t_end - pos
            max_d = np.maximum(d_s, d_e)
            sel = (d_s >= 0) & (d_e >= 0) & (max_d > lo) & (max_d <= hi) & in_valid
            if center_sampling:
                sel &= np.abs(pos - ev.center) <= center_radius * stride
            if not sel.any():
                continue
            dist = np.abs(pos - ev.center)
            update = sel & (dist < best[:, ev.class_id])
            best[update, ev.class_id] = dist[update]
            cls[update, ev.class_id] = 1.0
            mask[update, ev.class_id] = True
            offsets[0, ev.class_id, update] = d_s[update] / stride
            offsets[1, ev.class_id, update] = d_e[update] / stride
        total_pos += int(mask.sum())
        levels.append(LevelTargets(cls=cls, offsets=offsets, mask=mask))
    return TargetAssignment(levels=levels, num_positives=total_pos)
