"""Domain containers shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class EventAnnotation:
    """One ground-truth event: [t_start, t_end] in timestep units, plus class."""

    t_start: float
    t_end: float
    class_id: int

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ConfigurationError(
                f"event must have t_end > t_start, got [{self.t_start}, {self.t_end}]"
            )
        if self.class_id < 0:
            raise ConfigurationError(f"negative class id {self.class_id}")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def center(self) -> float:
        return 0.5 * (self.t_start + self.t_end)


@dataclass
class FeatureSequence:
    """Per-timestep features of one modality with a valid-length mask."""

    values: np.ndarray  # [T, d]
    valid_len: int

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values)
        if self.values.ndim != 2:
            raise ConfigurationError(f"feature sequence must be [T, d], got {self.values.shape}")
        if not 0 <= self.valid_len <= self.values.shape[0]:
            raise ConfigurationError(
                f"valid_len {self.valid_len} outside [0, {self.values.shape[0]}]"
            )

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def mask(self) -> np.ndarray:
        """Boolean validity mask of shape [T]."""
        m = np.zeros(self.length, dtype=bool)
        m[: self.valid_len] = True
        return m


def pad_crop(seq: FeatureSequence, target_len: int) -> FeatureSequence:
    """Zero-pad or truncate a sequence to exactly ``target_len`` timesteps."""
    t, d = seq.values.shape
    if t == target_len:
        return FeatureSequence(seq.values.copy(), min(seq.valid_len, target_len))
    if t < target_len:
        out = np.zeros((target_len, d), dtype=seq.values.dtype)
        out[:t] = seq.values
        return FeatureSequence(out, seq.valid_len)
    return FeatureSequence(seq.values[:target_len].copy(), min(seq.valid_len, target_len))


def clip_events(events: list[EventAnnotation], limit: float) -> list[EventAnnotation]:
    """Clip events to [0, limit); events starting at or past the limit drop out."""
    clipped = []
    for ev in events:
        if ev.t_start >= limit:
            continue
        clipped.append(EventAnnotation(ev.t_start, min(ev.t_end, limit), ev.class_id))
    return clipped


@dataclass
class VideoSample:
    """One labeled video: both modality streams plus its event annotations."""

    video_id: str
    audio: FeatureSequence
    visual: FeatureSequence
    events: list[EventAnnotation] = field(default_factory=list)
    seconds_per_timestep: float = 1.0

    def __post_init__(self):
        if self.audio.length != self.visual.length:
            raise ConfigurationError(
                f"modality lengths differ: {self.audio.length} vs {self.visual.length}"
            )
        if self.audio.valid_len != self.visual.valid_len:
            raise ConfigurationError(
                f"modality valid lengths differ: {self.audio.valid_len} vs {self.visual.valid_len}"
            )

    @property
    def valid_len(self) -> int:
        return self.audio.valid_len
