"""Synthetic dense-event corpus generator.

Each class owns a fixed random unit "signature" vector per modality.
A planted event adds its class signature over its span in one or both
streams; only events present in BOTH streams are labeled, while
single-stream distractors exercise the cross-modal intersection semantics.
Gaussian noise is added everywhere inside the native length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EventAnnotation, FeatureSequence, VideoSample, pad_crop
from .errors import ConfigurationError
from .fileio import ManifestEntry, read_manifest, write_manifest, write_tensor
from .postprocess import LocalizedEvent

# duration buckets in timesteps at seconds_per_timestep=1: short/middle/long
DURATION_BUCKETS = ((1, 5), (6, 20), (21, 60))


@dataclass
class SynthConfig:
    num_videos: int = 100
    max_len: int = 64
    audio_dim: int = 64
    visual_dim: int = 128
    num_classes: int = 5
    events_per_video: float = 2.8          # Poisson mean of planted events
    duration_weights: tuple[float, float, float] = (0.5, 0.35, 0.15)
    distractor_rate: float = 0.0           # fraction planted in one stream only
    noise_level: float = 0.1               # Gaussian noise std per element
    seed: int = 0
    seconds_per_timestep: float = 1.0
    length_range: tuple[float, float] = (0.7, 1.0)  # native length as fraction of max_len

    def __post_init__(self):
        if self.num_videos < 0:
            raise ConfigurationError(f"data.num_videos must be >= 0, got {self.num_videos}")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ConfigurationError(f"data.distractor_rate must be in [0, 1], got {self.distractor_rate}")
        if abs(sum(self.duration_weights) - 1.0) > 1e-6:
            raise ConfigurationError("data.duration_weights must sum to 1")
        lo, hi = self.length_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigurationError(f"data.length_range must satisfy 0 < lo <= hi <= 1, got {self.length_range}")


def class_signatures(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-class unit vectors, fixed by the dataset seed: ([C, d_a], [C, d_v])."""
    rng = np.random.default_rng([cfg.seed, 0])
    sig_a = rng.normal(size=(cfg.num_classes, cfg.audio_dim))
    sig_v = rng.normal(size=(cfg.num_classes, cfg.visual_dim))
    sig_a /= np.linalg.norm(sig_a, axis=1, keepdims=True)
    sig_v /= np.linalg.norm(sig_v, axis=1, keepdims=True)
    return sig_a.astype(np.float32), sig_v.astype(np.float32)


def generate_video(
    cfg: SynthConfig,
    video_index: int,
    signatures: tuple[np.ndarray, np.ndarray] | None = None,
) -> VideoSample:
    """One labeled video; the rng derives from (seed, video_index)."""
    sig_a, sig_v = signatures if signatures is not None else class_signatures(cfg)
    rng = np.random.default_rng([cfg.seed, 1, video_index])

    lo, hi = cfg.length_range
    native = int(round(rng.uniform(lo, hi) * cfg.max_len))
    native = max(min(native, cfg.max_len), min(8, cfg.max_len))

    audio = np.zeros((native, cfg.audio_dim), dtype=np.float64)
    visual = np.zeros((native, cfg.visual_dim), dtype=np.float64)
    annotations: list[EventAnnotation] = []

    for _ in range(rng.poisson(cfg.events_per_video)):
        class_id = int(rng.integers(cfg.num_classes))
        bucket = int(rng.choice(len(DURATION_BUCKETS), p=cfg.duration_weights))
        dur_lo, dur_hi = DURATION_BUCKETS[bucket]
        duration = int(rng.integers(dur_lo, dur_hi + 1))
        duration = max(1, min(duration, native - 1))
        start = int(rng.integers(0, native - duration + 1))
        end = start + duration
        distractor = rng.random() < cfg.distractor_rate
        if distractor:
            if rng.random() < 0.5:
                audio[start:end] += sig_a[class_id]
            else:
                visual[start:end] += sig_v[class_id]
        else:
            audio[start:end] += sig_a[class_id]
            visual[start:end] += sig_v[class_id]
            annotations.append(EventAnnotation(float(start), float(end), class_id))

    if cfg.noise_level > 0:
        audio += rng.normal(0.0, cfg.noise_level, size=audio.shape)
        visual += rng.normal(0.0, cfg.noise_level, size=visual.shape)

    return VideoSample(
        video_id=f"vid_{video_index:05d}",
        audio=pad_crop(FeatureSequence(audio.astype(np.float32), native), cfg.max_len),
        visual=pad_crop(FeatureSequence(visual.astype(np.float32), native), cfg.max_len),
        events=annotations,
        seconds_per_timestep=cfg.seconds_per_timestep,
    )


def generate_dataset(cfg: SynthConfig, out_dir: str | Path) -> list[ManifestEntry]:
    """Write features and manifest.txt under ``out_dir``; returns the entries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    signatures = class_signatures(cfg)
    entries: list[ManifestEntry] = []
    for i in range(cfg.num_videos):
        video = generate_video(cfg, i, signatures)
        audio_path = f"{video.video_id}.a.avt"
        visual_path = f"{video.video_id}.v.avt"
        write_tensor(out_dir / audio_path, video.audio.values)
        write_tensor(out_dir / visual_path, video.visual.values)
        entries.append(
            ManifestEntry(
                video_id=video.video_id,
                valid_len=video.valid_len,
                audio_path=audio_path,
                visual_path=visual_path,
                seconds_per_timestep=cfg.seconds_per_timestep,
                events=video.events,
            )
        )
    write_manifest(out_dir / "manifest.txt", entries)
    return entries


def dataset_summary(entries: list[ManifestEntry]) -> str:
    """Event count plus duration-bucket histogram for the gen command."""
    counts = [0, 0, 0]
    total = 0
    for entry in entries:
        for ev in entry.events:
            total += 1
            dur = ev.duration * entry.seconds_per_timestep
            if dur <= 5:
                counts[0] += 1
            elif dur <= 20:
                counts[1] += 1
            else:
                counts[2] += 1
    return (
        f"videos={len(entries)} events={total} "
        f"short={counts[0]} mid={counts[1]} long={counts[2]}"
    )


def signature_projection_events(
    video: VideoSample,
    signatures: tuple[np.ndarray, np.ndarray],
    threshold: float = 0.5,
) -> list[LocalizedEvent]:
    """Analytic detector: a timestep holds class c iff both streams project
    onto c's signature above the threshold; maximal runs become events.

    On noiseless single-event data this recovers spans exactly; it serves as
    the separability oracle that calibrates learnability expectations.
    """
    sig_a, sig_v = signatures
    v = video.valid_len
    proj_a = video.audio.values[:v] @ sig_a.T    # [v, C]
    proj_v = video.visual.values[:v] @ sig_v.T
    joint = np.minimum(proj_a, proj_v)
    events: list[LocalizedEvent] = []
    for c in range(joint.shape[1]):
        active = joint[:, c] > threshold
        t = 0
        while t < v:
            if active[t]:
                run_start = t
                while t < v and active[t]:
                    t += 1
                score = float(np.clip(joint[run_start:t, c].mean(), 0.0, 1.0))
                events.append(LocalizedEvent(float(run_start), float(t), c, score))
            else:
                t += 1
    return events


def load_synth_dataset(manifest_path: str | Path) -> list[VideoSample]:
    """Round-trip convenience used by the CLI and tests."""
    from .fileio import load_video

    manifest_path = Path(manifest_path)
    return [load_video(manifest_path.parent, e) for e in read_manifest(manifest_path)]
