"""Seeded epoch loop with sequential per-video gradient accumulation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import VideoSample
from ..errors import ConfigurationError
from ..model.config import ModelConfig
from ..model.network import LocalizerNetwork
from .losses import LossBreakdown, LossWeights, total_loss
from .optim import Adam
from .targets import TargetAssignment, assign_targets, default_regression_ranges


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-4
    warmup_steps: int = 0
    seed: int = 0
    cls_weight: float = 1.0
    reg_weight: float = 1.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    center_sampling: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"train.epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.cls_weight <= 0 or self.reg_weight <= 0:
            raise ConfigurationError("train.cls_weight and train.reg_weight must be positive")

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            cls_weight=self.cls_weight,
            reg_weight=self.reg_weight,
            focal_gamma=self.focal_gamma,
            focal_alpha=self.focal_alpha,
        )


@dataclass
class EpochStats:
    epoch: int
    total: float
    cls: float
    reg: float
    seconds: float

    def log_line(self) -> str:
        return f"{self.epoch}\t{self.total:.6f}\t{self.cls:.6f}\t{self.reg:.6f}\t{self.seconds:.3f}"


@dataclass
class TrainSample:
    video: VideoSample
    targets: TargetAssignment = field(repr=False, default=None)


def prepare_samples(
    dataset: list[VideoSample], cfg: ModelConfig, train_cfg: TrainConfig
) -> list[TrainSample]:
    """Precompute target assignments; they depend only on annotations."""
    ranges = default_regression_ranges(cfg.num_levels)
    samples = []
    for video in dataset:
        targets = assign_targets(
            video.events, cfg, ranges=ranges, valid_len=video.valid_len,
            center_sampling=train_cfg.center_sampling,
        )
        samples.append(TrainSample(video=video, targets=targets))
    return samples


def train_epoch(
    samples: list[TrainSample],
    model: LocalizerNetwork,
    optimizer: Adam,
    weights: LossWeights,
    batch_size: int,
    rng: np.random.Generator,
) -> LossBreakdown:
    """One deterministic pass: shuffle, batch, accumulate, step."""
    if not samples:
        raise ConfigurationError("cannot train on an empty dataset")
    order = rng.permutation(len(samples))
    sum_total = sum_cls = sum_reg = 0.0
    n_pos = 0
    for start in range(0, len(order), batch_size):
        batch = order[start : start + batch_size]
        optimizer.zero_grad()
        inv = 1.0 / len(batch)
        for idx in batch:
            sample = samples[idx]
            result = model.forward(sample.video.audio, sample.video.visual)
            loss, breakdown = total_loss(result.levels, sample.targets, weights)
            (loss * inv).backward()
            sum_total += breakdown.total
            sum_cls += breakdown.cls
            sum_reg += breakdown.reg
            n_pos += breakdown.num_positives
        optimizer.step()
    n = len(samples)
    return LossBreakdown(
        total=sum_total / n, cls=sum_cls / n, reg=sum_reg / n, num_positives=n_pos
    )


def train(
    model: LocalizerNetwork,
    dataset: list[VideoSample],
    train_cfg: TrainConfig,
    optimizer: Adam | None = None,
    start_epoch: int = 0,
    log_path: str | Path | None = None,
) -> tuple[Adam, list[EpochStats]]:
    """Run epochs ``start_epoch..epochs``; append one log line per epoch.

    Shuffling derives from (seed, epoch) so a resumed run replays the exact
    batch order of an uninterrupted one.
    """
    if optimizer is None:
        optimizer = Adam(
            model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay,
            warmup_steps=train_cfg.warmup_steps,
        )
    samples = prepare_samples(dataset, model.cfg, train_cfg)
    weights = train_cfg.loss_weights()
    history: list[EpochStats] = []
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(start_epoch, train_cfg.epochs):
            t0 = time.perf_counter()
            rng = np.random.default_rng([train_cfg.seed, epoch])
            breakdown = train_epoch(
                samples, model, optimizer, weights, train_cfg.batch_size, rng
            )
            stats = EpochStats(
                epoch=epoch, total=breakdown.total, cls=breakdown.cls,
                reg=breakdown.reg, seconds=time.perf_counter() - t0,
            )
            history.append(stats)
            if log_file:
                log_file.write(stats.log_line() + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    return optimizer, history
