"""scikit-learn style facade over the full pipeline.

``X`` is a list of (audio, visual) array pairs, one per video, each of
shape [length, dim]; ``y`` is a list of event lists, where an event is an
``EventAnnotation`` or a (t_start, t_end, class_id) tuple. ``fit`` trains
the detector, ``predict`` returns decoded + suppressed events per video,
``score`` reports average mAP over tIoU thresholds 0.1..0.9.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .configfile import NmsSection
from .data import EventAnnotation, FeatureSequence, VideoSample, clip_events, pad_crop
from .errors import ConfigurationError
from .evaluation import evaluate
from .model.config import ModelConfig
from .model.network import LocalizerNetwork
from .autodiff import no_grad
from .postprocess import infer_events
from .training.loop import TrainConfig, train


def _check_feature_array(arr, name: str, index: int) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ConfigurationError(
            f"X[{index}] {name} stream must be a 2D [length, dim] array, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"X[{index}] {name} stream contains non-finite values")
    return arr


def _as_events(raw, index: int) -> list[EventAnnotation]:
    events = []
    for item in raw:
        if isinstance(item, EventAnnotation):
            events.append(item)
        else:
            start, end, class_id = item
            events.append(EventAnnotation(float(start), float(end), int(class_id)))
    if any(ev.class_id < 0 for ev in events):
        raise ConfigurationError(f"y[{index}] contains a negative class id")
    return events


class AudioVisualEventLocalizer(BaseEstimator):
    """Dense audio-visual event localizer with a fit/predict interface."""

    def __init__(
        self,
        max_len: int = 64,
        embed_dim: int = 32,
        num_classes: int | None = None,
        embed_depth: int = 1,
        num_levels: int = 4,
        num_heads: int = 4,
        cross_attn: bool = True,
        temporal_gate: bool = True,
        gate_modalities: str = "both",
        coarse_to_fine: bool = True,
        fine_to_coarse: bool = True,
        mix_order: str = "c2f_first",
        fusion_scope: str = "adjacent",
        level_encoder_depth: int = 1,
        layer_norm: bool = True,
        epochs: int = 30,
        batch_size: int = 16,
        lr: float = 1e-3,
        weight_decay: float = 1e-4,
        warmup_steps: int = 100,
        cls_weight: float = 1.0,
        reg_weight: float = 1.0,
        focal_gamma: float = 2.0,
        focal_alpha: float = 0.25,
        score_threshold: float = 0.01,
        nms_method: str = "gaussian",
        nms_sigma: float = 0.9,
        seed: int = 0,
    ):
        self.max_len = max_len
        self.embed_dim = embed_dim
        self.num_classes = num_classes
        self.embed_depth = embed_depth
        self.num_levels = num_levels
        self.num_heads = num_heads
        self.cross_attn = cross_attn
        self.temporal_gate = temporal_gate
        self.gate_modalities = gate_modalities
        self.coarse_to_fine = coarse_to_fine
        self.fine_to_coarse = fine_to_coarse
        self.mix_order = mix_order
        self.fusion_scope = fusion_scope
        self.level_encoder_depth = level_encoder_depth
        self.layer_norm = layer_norm
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.cls_weight = cls_weight
        self.reg_weight = reg_weight
        self.focal_gamma = focal_gamma
        self.focal_alpha = focal_alpha
        self.score_threshold = score_threshold
        self.nms_method = nms_method
        self.nms_sigma = nms_sigma
        self.seed = seed

    # -- input handling -----------------------------------------------------

    def _to_video(self, pair, index: int, events=None) -> VideoSample:
        if isinstance(pair, VideoSample):
            video = pair
            audio, visual = video.audio.values, video.visual.values
            valid = video.valid_len
            events = video.events if events is None else events
        else:
            audio, visual = pair
            audio = _check_feature_array(audio, "audio", index)
            visual = _check_feature_array(visual, "visual", index)
            if audio.shape[0] != visual.shape[0]:
                raise ConfigurationError(
                    f"X[{index}] modality lengths differ: {audio.shape[0]} vs {visual.shape[0]}"
                )
            valid = min(audio.shape[0], self.max_len)
        event_list = _as_events(events or [], index)
        event_list = clip_events(event_list, float(valid))
        return VideoSample(
            video_id=f"x_{index:05d}",
            audio=pad_crop(FeatureSequence(np.asarray(audio, dtype=np.float32), valid), self.max_len),
            visual=pad_crop(FeatureSequence(np.asarray(visual, dtype=np.float32), valid), self.max_len),
            events=event_list,
        )

    def _model_config(self, audio_dim: int, visual_dim: int, num_classes: int) -> ModelConfig:
        return ModelConfig(
            max_len=self.max_len,
            embed_dim=self.embed_dim,
            audio_dim=audio_dim,
            visual_dim=visual_dim,
            num_classes=num_classes,
            embed_depth=self.embed_depth,
            num_levels=self.num_levels,
            num_heads=self.num_heads,
            cross_attn=self.cross_attn,
            temporal_gate=self.temporal_gate,
            gate_modalities=self.gate_modalities,
            coarse_to_fine=self.coarse_to_fine,
            fine_to_coarse=self.fine_to_coarse,
            mix_order=self.mix_order,
            fusion_scope=self.fusion_scope,
            level_encoder_depth=self.level_encoder_depth,
            layer_norm=self.layer_norm,
        )

    # -- estimator API ------------------------------------------------------

    def fit(self, X, y):
        if len(X) != len(y):
            raise ConfigurationError(f"len(X)={len(X)} != len(y)={len(y)}")
        if len(X) == 0:
            raise ConfigurationError("cannot fit on an empty dataset")
        videos = [self._to_video(x, i, events) for i, (x, events) in enumerate(zip(X, y))]
        n_classes = self.num_classes
        if n_classes is None:
            observed = [ev.class_id for v in videos for ev in v.events]
            if not observed:
                raise ConfigurationError("cannot infer num_classes from empty annotations")
            n_classes = max(observed) + 1
        cfg = self._model_config(videos[0].audio.dim, videos[0].visual.dim, n_classes)
        self.model_ = LocalizerNetwork(cfg, seed=self.seed)
        self.config_ = cfg
        train_cfg = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            weight_decay=self.weight_decay, warmup_steps=self.warmup_steps,
            seed=self.seed, cls_weight=self.cls_weight, reg_weight=self.reg_weight,
            focal_gamma=self.focal_gamma, focal_alpha=self.focal_alpha,
        )
        _, self.history_ = train(self.model_, videos, train_cfg)
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this AudioVisualEventLocalizer instance is not fitted yet"
            )

    def predict(self, X):
        self._require_fitted()
        nms = NmsSection(method=self.nms_method, sigma=self.nms_sigma).soft_nms()
        out = []
        for i, x in enumerate(X):
            video = self._to_video(x, i)
            with no_grad():
                result = self.model_.forward(video.audio, video.visual)
            out.append(
                infer_events(
                    result, video.valid_len, nms, score_threshold=self.score_threshold
                )
            )
        return out

    def score(self, X, y) -> float:
        """Average mAP over tIoU thresholds 0.1..0.9."""
        self._require_fitted()
        preds = self.predict(X)
        preds_by_video = {f"x_{i:05d}": events for i, events in enumerate(preds)}
        gts_by_video = {
            f"x_{i:05d}": clip_events(_as_events(events, i), float(self.max_len))
            for i, events in enumerate(y)
        }
        report = evaluate(preds_by_video, gts_by_video, self.config_.num_classes)
        return report.average_map
