from .losses import LossBreakdown, LossWeights, focal_loss, giou_loss_1d, total_loss
from .loop import EpochStats, TrainConfig, prepare_samples, train, train_epoch
from .optim import Adam
from .targets import (
    LevelTargets,
    TargetAssignment,
    assign_targets,
    default_regression_ranges,
)

__all__ = [
    "Adam",
    "EpochStats",
    "LevelTargets",
    "LossBreakdown",
    "LossWeights",
    "TargetAssignment",
    "TrainConfig",
    "assign_targets",
    "default_regression_ranges",
    "focal_loss",
    "giou_loss_1d",
    "prepare_samples",
    "total_loss",
    "train",
    "train_epoch",
]
