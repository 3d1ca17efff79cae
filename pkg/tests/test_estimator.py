"""The scikit-learn facade: fit/predict/score, params, validation."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from avloc.errors import ConfigurationError
from avloc.estimator import AudioVisualEventLocalizer
from avloc.synthdata import SynthConfig, class_signatures, generate_video


def make_xy(n=6, max_len=16, seed=0):
    cfg = SynthConfig(num_videos=n, max_len=max_len, audio_dim=8, visual_dim=12,
                      num_classes=2, noise_level=0.02, seed=seed,
                      length_range=(1.0, 1.0))
    sigs = class_signatures(cfg)
    videos = [generate_video(cfg, i, sigs) for i in range(n)]
    X = [(v.audio.values, v.visual.values) for v in videos]
    y = [[(e.t_start, e.t_end, e.class_id) for e in v.events] for v in videos]
    return X, y


def small_estimator(**kw):
    base = dict(max_len=16, embed_dim=8, num_levels=2, num_heads=2, embed_depth=1,
                epochs=3, batch_size=4, lr=2e-3, warmup_steps=0, seed=0)
    base.update(kw)
    return AudioVisualEventLocalizer(**base)


class TestSklearnProtocol:
    def test_get_params_round_trips_through_set_params(self):
        est = small_estimator()
        params = est.get_params()
        assert params["num_levels"] == 2
        est.set_params(num_levels=3, lr=1e-3)
        assert est.num_levels == 3 and est.lr == 1e-3

    def test_clone_preserves_params(self):
        est = small_estimator(temporal_gate=False)
        copy = clone(est)
        assert copy.get_params() == est.get_params()

    def test_fit_returns_self_and_sets_fitted_attributes(self):
        X, y = make_xy()
        est = small_estimator()
        assert est.fit(X, y) is est
        assert hasattr(est, "model_") and hasattr(est, "history_")
        assert est.config_.num_classes == 2

    def test_predict_before_fit_raises_not_fitted(self):
        X, _ = make_xy(n=1)
        with pytest.raises(NotFittedError):
            small_estimator().predict(X)

    def test_predict_returns_event_lists_per_video(self):
        X, y = make_xy()
        est = small_estimator().fit(X, y)
        preds = est.predict(X[:2])
        assert len(preds) == 2
        for events in preds:
            for ev in events:
                assert ev.t_end > ev.t_start
                assert 0.0 < ev.score <= 1.0

    def test_score_is_average_map_in_unit_interval(self):
        X, y = make_xy()
        est = small_estimator().fit(X, y)
        s = est.score(X, y)
        assert 0.0 <= s <= 1.0


class TestValidation:
    def test_mismatched_lengths_rejected(self):
        X, y = make_xy(n=3)
        with pytest.raises(ConfigurationError, match="len"):
            small_estimator().fit(X, y[:2])

    def test_non_2d_features_rejected(self):
        y = [[(0.0, 4.0, 0)]]
        with pytest.raises(ConfigurationError, match="2D"):
            small_estimator().fit([(np.zeros(16), np.zeros((16, 12)))], y)

    def test_modality_length_mismatch_rejected(self):
        y = [[(0.0, 4.0, 0)]]
        X = [(np.zeros((16, 8), dtype=np.float32), np.zeros((12, 12), dtype=np.float32))]
        with pytest.raises(ConfigurationError, match="lengths"):
            small_estimator().fit(X, y)

    def test_non_finite_features_rejected(self):
        bad = np.zeros((16, 8), dtype=np.float32)
        bad[3, 3] = np.nan
        X = [(bad, np.zeros((16, 12), dtype=np.float32))]
        with pytest.raises(ConfigurationError, match="finite"):
            small_estimator().fit(X, [[(0.0, 4.0, 0)]])

    def test_num_classes_inferred_from_labels(self):
        X, y = make_xy()
        est = small_estimator(num_classes=None).fit(X, y)
        observed = max(c for events in y for (_, _, c) in events) + 1
        assert est.config_.num_classes == observed

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigurationError, match="empty"):
            small_estimator().fit([], [])

    def test_longer_sequences_are_cropped(self):
        rng = np.random.default_rng(0)
        X = [(rng.normal(size=(40, 8)).astype(np.float32),
              rng.normal(size=(40, 12)).astype(np.float32))]
        y = [[(2.0, 9.0, 0)]]
        est = small_estimator(num_classes=2).fit(X, y)
        preds = est.predict(X)
        assert all(ev.t_end <= 16.0 for ev in preds[0])


class TestLearnsSignal:
    def test_fit_improves_over_training(self):
        X, y = make_xy(n=8, seed=3)
        est = small_estimator(epochs=12, lr=3e-3).fit(X, y)
        totals = [h.total for h in est.history_]
        assert totals[-1] < totals[0] * 0.8
