"""Adam contracts and the deterministic epoch loop."""

import numpy as np
import pytest

from avloc.autodiff import Parameter, Tensor
from avloc.data import FeatureSequence, VideoSample
from avloc.errors import ConfigurationError, GradientError
from avloc.model import LocalizerNetwork, ModelConfig
from avloc.training import Adam, TrainConfig, train


class TestAdam:
    def test_zero_gradient_zero_decay_leaves_parameters_unchanged(self):
        p = Parameter(np.array([1.0, -2.0, 3.0]), name="p")
        opt = Adam([p], lr=0.1, weight_decay=0.0)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])

    def test_first_step_closed_form(self):
        """Bias correction makes the first update -lr * g / (|g| + eps)."""
        rng = np.random.default_rng(0)
        g = rng.normal(size=5)
        p = Parameter(np.zeros(5), name="p")
        opt = Adam([p], lr=0.01, weight_decay=0.0)
        p.grad[:] = g
        opt.step()
        expected = -0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(p.data, expected, rtol=1e-6)

    def test_quadratic_bowl_loss_strictly_decreases(self):
        rng = np.random.default_rng(1)
        theta = Parameter(rng.normal(size=8) * 3.0, name="theta")
        target = rng.normal(size=8)
        opt = Adam([theta], lr=0.05, weight_decay=0.0)
        losses = []
        for _ in range(100):
            opt.zero_grad()
            diff = theta - Tensor(target)
            loss = (diff * diff).sum()
            loss.backward()
            losses.append(loss.item())
            opt.step()
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_nan_gradient_aborts_naming_parameter(self):
        p = Parameter(np.ones(3), name="blocks.0.w")
        opt = Adam([p])
        p.grad[:] = np.nan
        with pytest.raises(GradientError, match="blocks.0.w"):
            opt.step()

    def test_decoupled_weight_decay_shrinks_parameters(self):
        p = Parameter(np.array([10.0]), name="p")
        opt = Adam([p], lr=0.1, weight_decay=0.5)
        opt.step()  # zero gradient: only the decay term acts
        np.testing.assert_allclose(p.data, [10.0 * (1 - 0.1 * 0.5)])

    def test_warmup_scales_learning_rate(self):
        p = Parameter(np.zeros(1), name="p")
        opt = Adam([p], lr=1.0, warmup_steps=10)
        assert opt.current_lr() == pytest.approx(0.1)
        opt.step_count = 5
        assert opt.current_lr() == pytest.approx(0.6)
        opt.step_count = 10
        assert opt.current_lr() == 1.0


def toy_dataset(n=4, max_len=16, seed=0):
    from avloc.synthdata import SynthConfig, class_signatures, generate_video

    cfg = SynthConfig(num_videos=n, max_len=max_len, audio_dim=8, visual_dim=12,
                      num_classes=2, noise_level=0.02, seed=seed,
                      length_range=(0.9, 1.0))
    sigs = class_signatures(cfg)
    return [generate_video(cfg, i, sigs) for i in range(n)], cfg


def toy_model_cfg(max_len=16):
    return ModelConfig(max_len=max_len, embed_dim=8, audio_dim=8, visual_dim=12,
                       num_classes=2, embed_depth=1, num_levels=2, num_heads=2)


class TestTrainLoop:
    def test_single_sample_overfit_drops_loss_below_ten_percent(self):
        videos, _ = toy_dataset(n=1)
        model = LocalizerNetwork(toy_model_cfg(), seed=0)
        cfg = TrainConfig(epochs=200, batch_size=1, lr=4e-3, weight_decay=0.0, seed=0)
        _, history = train(model, videos, cfg)
        assert history[-1].total < 0.1 * history[0].total

    def test_batch_size_larger_than_dataset_is_one_batch(self):
        videos, _ = toy_dataset(n=3)
        model = LocalizerNetwork(toy_model_cfg(), seed=1)
        opt, history = train(model, videos, TrainConfig(epochs=1, batch_size=64, seed=0))
        assert opt.step_count == 1
        assert len(history) == 1

    def test_same_seed_gives_identical_loss_sequences(self):
        videos, _ = toy_dataset(n=4)

        def run():
            model = LocalizerNetwork(toy_model_cfg(), seed=2)
            _, history = train(model, videos, TrainConfig(epochs=3, batch_size=2, seed=5))
            return [h.total for h in history]

        assert run() == run()

    def test_empty_dataset_rejected(self):
        model = LocalizerNetwork(toy_model_cfg(), seed=3)
        with pytest.raises(ConfigurationError, match="empty"):
            train(model, [], TrainConfig(epochs=1))

    def test_log_lines_are_tab_separated(self, tmp_path):
        videos, _ = toy_dataset(n=2)
        model = LocalizerNetwork(toy_model_cfg(), seed=4)
        log = tmp_path / "train.log"
        train(model, videos, TrainConfig(epochs=2, batch_size=2, seed=0), log_path=log)
        lines = log.read_text().strip().splitlines()
        assert len(lines) == 2
        for i, line in enumerate(lines):
            fields = line.split("\t")
            assert len(fields) == 5
            assert int(fields[0]) == i
            float(fields[1]), float(fields[2]), float(fields[3]), float(fields[4])
