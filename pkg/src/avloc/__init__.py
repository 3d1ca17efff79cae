"""Dense audio-visual event localization toolkit.

Trainable cross-modal temporal pyramid detector with interval decoding,
Soft-NMS and tIoU/mAP evaluation, plus a synthetic dense-event dataset
generator. The top-level estimator follows the scikit-learn fit/predict
convention; the ``avloc`` CLI drives the same pipeline from the shell.
"""

from .autodiff import Parameter, Tensor, no_grad
from .data import EventAnnotation, FeatureSequence, VideoSample, pad_crop
from .estimator import AudioVisualEventLocalizer
from .evaluation import EvalReport, evaluate, tiou
from .model import LocalizerNetwork, ModelConfig
from .postprocess import LocalizedEvent, SoftNmsConfig, decode_predictions, soft_nms
from .synthdata import SynthConfig, generate_dataset, generate_video
from .training import Adam, TrainConfig, assign_targets, focal_loss, giou_loss_1d, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AudioVisualEventLocalizer",
    "EvalReport",
    "EventAnnotation",
    "FeatureSequence",
    "LocalizedEvent",
    "LocalizerNetwork",
    "ModelConfig",
    "Parameter",
    "SoftNmsConfig",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "VideoSample",
    "assign_targets",
    "decode_predictions",
    "evaluate",
    "focal_loss",
    "generate_dataset",
    "generate_video",
    "giou_loss_1d",
    "no_grad",
    "pad_crop",
    "soft_nms",
    "tiou",
    "train",
    "__version__",
]
