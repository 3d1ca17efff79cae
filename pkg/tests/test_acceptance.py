"""Acceptance criteria, one test per criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS/FAIL
lines as the criteria complete. The learnability case trains a full model
on a 300-video synthetic corpus and dominates the runtime.
"""

import functools
import math
import time

import numpy as np
import pytest

from avloc.autodiff import (
    Parameter,
    Tensor,
    conv1d,
    finite_difference_error,
    layer_norm,
    maxpool1d,
    multi_head_attention,
    no_grad,
    softmax_lastdim,
)
from avloc.cli import main as cli_main
from avloc.data import EventAnnotation, FeatureSequence
from avloc.evaluation import evaluate, tiou
from avloc.model import LocalizerNetwork, ModelConfig
from avloc.model.blocks import mask_rows
from avloc.postprocess import (
    LocalizedEvent,
    SoftNmsConfig,
    decode_predictions,
    infer_events,
    soft_nms,
    targets_as_predictions,
)
from avloc.synthdata import (
    SynthConfig,
    class_signatures,
    generate_video,
    signature_projection_events,
)
from avloc.training import (
    LossWeights,
    TrainConfig,
    assign_targets,
    focal_loss,
    giou_loss_1d,
    total_loss,
    train,
)

pytestmark = pytest.mark.filterwarnings("ignore::DeprecationWarning")


def criterion(name):
    """Print one pass/fail line per acceptance criterion."""

    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"\n[ACCEPTANCE] {name}: FAIL")
                raise
            print(f"\n[ACCEPTANCE] {name}: PASS")
            return result

        return wrapper

    return decorate


# ---------------------------------------------------------------------------
# Gradient integrity
# ---------------------------------------------------------------------------

@criterion("gradient integrity (per layer type + full model, <=1e-4, <2min)")
def test_gradient_integrity():
    t0 = time.perf_counter()
    tol, h = 1e-4, 1e-5
    rng = np.random.default_rng(0)

    def p(*shape, scale=1.0):
        return Parameter(rng.normal(size=shape, scale=scale).astype(np.float64), name="p")

    # every layer type at tiny shapes (dims <= 8)
    x, w, b = p(8, 3), p(3, 3, 4), p(4)
    assert finite_difference_error(
        lambda: (conv1d(x, w, b, stride=2, padding=1) ** 2.0).sum(), [x, w, b], h=h
    ) <= tol
    mp = p(8, 4)
    assert finite_difference_error(
        lambda: (maxpool1d(mp, 2, 2) * 1.7).sum(), mp, h=h
    ) <= tol
    a, bm = p(4, 6), p(6, 5)
    assert finite_difference_error(lambda: ((a @ bm) ** 2.0).sum(), [a, bm], h=h) <= tol
    sm = p(4, 6)
    smw = rng.normal(size=(4, 6))
    assert finite_difference_error(
        lambda: (softmax_lastdim(sm) * smw).sum(), sm, h=h
    ) <= tol
    ew = p(5, 4)
    assert finite_difference_error(
        lambda: (ew.relu() + ew.sigmoid() + (ew * ew + 0.3).log()).sum(), ew, h=h
    ) <= tol
    ln_x, gamma, beta = p(5, 6), Parameter(np.abs(rng.normal(size=6)) + 0.5, name="g"), p(6)
    assert finite_difference_error(
        lambda: (layer_norm(ln_x, gamma, beta) ** 2.0).sum(), [ln_x, gamma, beta], h=h
    ) <= tol
    q, kv = p(4, 8), p(5, 8)
    mats = [p(8, 8, scale=0.5) for _ in range(4)]
    assert finite_difference_error(
        lambda: (multi_head_attention(q, kv, kv, *mats, num_heads=2) ** 2.0).sum(),
        [q, kv, *mats], h=h,
    ) <= tol

    # full model loss on a two-video micro-batch at the stated toy shape
    cfg = ModelConfig(max_len=8, embed_dim=4, audio_dim=3, visual_dim=5, num_classes=3,
                      embed_depth=1, num_levels=3, num_heads=2)
    net = LocalizerNetwork(cfg, seed=1, dtype=np.float64)
    batch = []
    for events in ([EventAnnotation(1.0, 5.0, 0), EventAnnotation(2.0, 8.0, 2)],
                   [EventAnnotation(3.0, 7.0, 1)]):
        audio = FeatureSequence(rng.normal(size=(8, 3)), 8)
        visual = FeatureSequence(rng.normal(size=(8, 5)), 8)
        batch.append((audio, visual, assign_targets(events, cfg)))
    weights = LossWeights()

    def loss_fn():
        loss = None
        for audio, visual, assignment in batch:
            result = net.forward(audio, visual)
            piece, _ = total_loss(result.levels, assignment, weights)
            loss = piece if loss is None else loss + piece
        return loss * 0.5

    err = finite_difference_error(loss_fn, net.parameters(), h=h, max_coords=2, seed=7)
    assert err <= tol, f"full-model gradient error {err:.2e}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"gradient integrity took {elapsed:.0f}s"


# ---------------------------------------------------------------------------
# Pyramid geometry
# ---------------------------------------------------------------------------

@criterion("pyramid geometry (T=224, 6 levels -> 224..7, width 2D)")
def test_pyramid_geometry():
    cfg = ModelConfig(max_len=224, embed_dim=16, audio_dim=8, visual_dim=12,
                      num_classes=4, embed_depth=1, num_levels=6, num_heads=2,
                      level_encoder_depth=0)
    net = LocalizerNetwork(cfg, seed=2)
    rng = np.random.default_rng(3)
    audio = FeatureSequence(rng.normal(size=(224, 8)).astype(np.float32), 224)
    visual = FeatureSequence(rng.normal(size=(224, 12)).astype(np.float32), 224)

    # the raw pyramid: embedding + stacked stages, concatenated per level
    fa = net.audio_embed(Tensor(audio.values), audio.mask())
    fv = net.visual_embed(Tensor(visual.values), visual.mask())
    lengths, widths = [], []
    mask = audio.mask()
    for stage in net.stages:
        mask = mask[::2] if len(lengths) else mask
        fa, fv, _ = stage(fa, fv, mask)
        lengths.append(fa.shape[0])
        widths.append(fa.shape[1] + fv.shape[1])
    assert lengths == [224, 112, 56, 28, 14, 7]
    assert widths == [2 * cfg.embed_dim] * 6

    result = net.forward(audio, visual)
    assert [lo.probs.shape[0] for lo in result.levels] == [224, 112, 56, 28, 14, 7]
    for lo in result.levels:
        assert lo.offsets.shape == (2, cfg.num_classes, lo.probs.shape[0])


# ---------------------------------------------------------------------------
# Gate contract
# ---------------------------------------------------------------------------

@criterion("gate contract (values in (0,1); zero-init = 0.5; disabled = identity)")
def test_gate_contract():
    cfg = ModelConfig(max_len=32, embed_dim=8, audio_dim=6, visual_dim=10, num_classes=3,
                      embed_depth=1, num_levels=3, num_heads=2)
    net = LocalizerNetwork(cfg, seed=4)
    rng = np.random.default_rng(5)
    audio = FeatureSequence(rng.normal(size=(32, 6)).astype(np.float32), 28)
    visual = FeatureSequence(rng.normal(size=(32, 10)).astype(np.float32), 28)
    result = net.forward(audio, visual)
    for pair in result.gates:
        for curve in (pair.audio, pair.visual):
            assert np.all(curve > 0.0) and np.all(curve < 1.0)

    for stage in net.stages:
        for gate in (stage.gate_a, stage.gate_v):
            gate.proj.w.data[:] = 0
            gate.proj.b.data[:] = 0
    result = net.forward(audio, visual)
    for pair in result.gates:
        np.testing.assert_array_equal(pair.audio, 0.5)
        np.testing.assert_array_equal(pair.visual, 0.5)

    # disabled branch: gates report 0.5 and the stage output is exactly the
    # downsample + exchange composition, with no gating term applied
    cfg_off = ModelConfig(**{**cfg.__dict__, "temporal_gate": False})
    net_off = LocalizerNetwork(cfg_off, seed=6)
    stage = net_off.stages[0]
    mask = audio.mask()
    fa = net_off.audio_embed(Tensor(audio.values), mask)
    fv = net_off.visual_embed(Tensor(visual.values), mask)
    out_a, out_v, pair = stage(fa, fv, mask)
    np.testing.assert_array_equal(pair.audio, 0.5)
    np.testing.assert_array_equal(pair.visual, 0.5)
    expect_a = stage.exchange_a(mask_rows(stage.down_a(fa), mask),
                                mask_rows(stage.down_v(fv), mask), mask)
    expect_v = stage.exchange_v(mask_rows(stage.down_v(fv), mask),
                                mask_rows(stage.down_a(fa), mask), mask)
    np.testing.assert_array_equal(out_a.data, expect_a.data)
    np.testing.assert_array_equal(out_v.data, expect_v.data)


# ---------------------------------------------------------------------------
# Inverse pair
# ---------------------------------------------------------------------------

@criterion("assignment/decoding inverse pair (exact, zero tolerance)")
def test_inverse_pair_exact():
    cfg = ModelConfig(max_len=64, embed_dim=8, audio_dim=4, visual_dim=6, num_classes=5,
                      embed_depth=1, num_levels=4, num_heads=2)
    rng = np.random.default_rng(8)
    for trial in range(25):
        events = []
        for _ in range(rng.integers(1, 6)):
            start = int(rng.integers(0, 60))
            end = int(rng.integers(start + 1, 65))
            cand = EventAnnotation(float(start), float(end), int(rng.integers(5)))
            if all(e.class_id != cand.class_id or _overlap(e, cand) < 0.55
                   for e in events):
                events.append(cand)
        assignment = assign_targets(events, cfg)
        if assignment.num_positives == 0:
            continue
        levels = targets_as_predictions(assignment, cfg.level_strides())
        decoded = decode_predictions(levels, valid_len=64, score_threshold=0.5,
                                     topk=100000)
        got = {(ev.t_start, ev.t_end, ev.class_id) for ev in decoded}
        want = {(ev.t_start, ev.t_end, ev.class_id) for ev in events}
        assert got == want, f"trial {trial}: {got} != {want}"
        kept = soft_nms(decoded, SoftNmsConfig(method="hard", iou_threshold=0.6,
                                               max_outputs=10000))
        assert len(kept) == len(events)
        assert {(ev.t_start, ev.t_end, ev.class_id) for ev in kept} == want


def _overlap(a, b):
    inter = max(0.0, min(a.t_end, b.t_end) - max(a.t_start, b.t_start))
    union = a.duration + b.duration - inter
    return inter / union if union else 0.0


# ---------------------------------------------------------------------------
# Scoring oracle equivalence
# ---------------------------------------------------------------------------

@criterion("scoring oracle equivalence (100 random instances, 1e-9, <1min)")
def test_scoring_oracle_equivalence():
    from test_evaluation import random_instance, reference_evaluate_map
    from test_postprocess import reference_soft_nms

    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    for _ in range(100):
        preds, gts, num_classes = random_instance(rng, max_classes=10, max_events=30)
        thr = float(rng.choice([0.1, 0.3, 0.5, 0.7, 0.9]))
        want = reference_evaluate_map(preds, gts, num_classes, thr)
        report = evaluate(preds, gts, num_classes, thresholds=(thr,),
                          report_thresholds=(thr,))
        assert abs(report.map_at[thr] - want) <= 1e-9

    for i in range(100):
        erng = np.random.default_rng(1000 + i)
        events = [
            LocalizedEvent(s, s + d, int(c), float(sc))
            for s, d, c, sc in zip(
                erng.uniform(0, 60, 30), erng.uniform(0.5, 18, 30),
                erng.integers(0, 10, 30), erng.uniform(0.05, 1.0, 30),
            )
        ]
        method = ("gaussian", "linear", "hard")[i % 3]
        cfg = SoftNmsConfig(method=method, sigma=0.7, iou_threshold=0.45,
                            score_floor=0.01, max_outputs=500)
        got = soft_nms(events, cfg)
        want = reference_soft_nms(events, cfg)
        assert len(got) == len(want)
        for g, w in zip(got, want):
            assert g.class_id == w.class_id and abs(g.score - w.score) <= 1e-9
            assert g.t_start == w.t_start and g.t_end == w.t_end
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"scoring equivalence took {elapsed:.0f}s"


# ---------------------------------------------------------------------------
# Loss closed forms
# ---------------------------------------------------------------------------

@criterion("loss closed forms (focal 0.04332 +- 1e-5; giou 3/7 +- 1e-9)")
def test_loss_closed_forms():
    focal = focal_loss(np.array(0.5), np.array(1.0), gamma=2.0, alpha=0.25)
    assert abs(focal.item() - 0.04332) <= 1e-5
    giou = giou_loss_1d((np.array(3.0), np.array(4.0)), (np.array(2.0), np.array(2.0)))
    assert abs(giou.item() - 3.0 / 7.0) <= 1e-9


# ---------------------------------------------------------------------------
# End-to-end learnability
# ---------------------------------------------------------------------------

@criterion("end-to-end learnability (test avg mAP >= 0.5, <30min)")
def test_end_to_end_learnability():
    t0 = time.perf_counter()
    data_cfg = SynthConfig(num_videos=360, max_len=64, audio_dim=64, visual_dim=128,
                           num_classes=5, distractor_rate=0.3, noise_level=0.1,
                           seed=11, length_range=(0.7, 1.0))
    sigs = class_signatures(data_cfg)
    videos = [generate_video(data_cfg, i, sigs) for i in range(360)]
    train_videos, test_videos = videos[:300], videos[300:]
    gts = {v.video_id: v.events for v in test_videos}

    # the analytic oracle must show the data is separable well above the bar
    oracle_preds = {
        v.video_id: signature_projection_events(v, sigs) for v in test_videos
    }
    oracle_map = evaluate(oracle_preds, gts, data_cfg.num_classes).average_map
    assert oracle_map >= 0.7, f"oracle avg mAP {oracle_map:.3f}: data not separable"

    model_cfg = ModelConfig(max_len=64, embed_dim=32, audio_dim=64, visual_dim=128,
                            num_classes=5, embed_depth=1, num_levels=4, num_heads=4)
    model = LocalizerNetwork(model_cfg, seed=0)
    train_cfg = TrainConfig(epochs=30, batch_size=16, lr=1e-3, weight_decay=1e-4,
                            warmup_steps=100, seed=0)
    assert train_cfg.epochs <= 50
    train(model, train_videos, train_cfg)

    preds = {}
    for v in test_videos:
        with no_grad():
            result = model.forward(v.audio, v.visual)
        preds[v.video_id] = infer_events(
            result, v.valid_len, SoftNmsConfig(), score_threshold=0.01
        )
    report = evaluate(preds, gts, data_cfg.num_classes)
    elapsed = time.perf_counter() - t0
    print(f"\n    oracle avg mAP {oracle_map:.4f}; model avg mAP {report.average_map:.4f}; "
          f"{elapsed:.0f}s")
    assert report.average_map >= 0.5, f"test avg mAP {report.average_map:.4f} < 0.5"
    assert elapsed < 1800.0, f"learnability run took {elapsed:.0f}s"


# ---------------------------------------------------------------------------
# Ablation plumbing
# ---------------------------------------------------------------------------

@criterion("ablation plumbing (32-cell grid on the toy profile)")
def test_ablation_plumbing(tmp_path):
    out = tmp_path / "ablate"
    rc = cli_main([
        "ablate", "--profile", "toy",
        "--set", "data.num_videos=8", "--set", "train.epochs=1",
        "--set", "train.batch_size=4",
        "--axes", "cross_attn,temporal_gate,coarse_to_fine,fine_to_coarse,mix_order",
        "--out", str(out),
    ])
    assert rc == 0
    rows = (out / "ablation.tsv").read_text().strip().splitlines()
    header = rows[0].split("\t")
    assert header[:5] == ["cross_attn", "temporal_gate", "coarse_to_fine",
                          "fine_to_coarse", "mix_order"]
    assert header[5:] == ["map@0.5", "map@0.6", "map@0.7", "map@0.8", "map@0.9", "avg"]
    assert len(rows) == 1 + 32  # full grid, no failed cells
    for row in rows[1:]:
        cells = row.split("\t")
        assert "FAILED" not in cells
        for value in cells[5:]:
            float(value)  # numeric orderings are recorded, not asserted


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------

@criterion("determinism (gen/train/eval bit-identical across reruns)")
def test_pipeline_determinism(tmp_path):
    small = [
        "--set", "model.max_len=16", "--set", "model.embed_dim=8",
        "--set", "model.audio_dim=8", "--set", "model.visual_dim=12",
        "--set", "model.num_classes=2", "--set", "model.embed_depth=1",
        "--set", "model.num_levels=2", "--set", "model.num_heads=2",
        "--set", "data.max_len=16", "--set", "data.audio_dim=8",
        "--set", "data.visual_dim=12", "--set", "data.num_classes=2",
        "--set", "data.num_videos=4", "--set", "data.noise_level=0.05",
    ]
    artifacts = {}
    for run in ("r1", "r2"):
        base = tmp_path / run
        assert cli_main(["gen", *small, "--out", str(base / "data")]) == 0
        assert cli_main(["train", *small, "--data", str(base / "data/manifest.txt"),
                         "--out", str(base / "run"), "--epochs", "2",
                         "--set", "train.batch_size=2"]) == 0
        assert cli_main(["eval", *small, "--checkpoint", str(base / "run/checkpoint.ccn"),
                         "--data", str(base / "data/manifest.txt"),
                         "--out", str(base / "eval")]) == 0
        blobs = {}
        for path in sorted((base / "data").iterdir()):
            blobs[f"data/{path.name}"] = path.read_bytes()
        blobs["checkpoint"] = (base / "run/checkpoint.ccn").read_bytes()
        blobs["predictions"] = (base / "eval/predictions.tsv").read_bytes()
        blobs["report"] = (base / "eval/report.kv").read_bytes()
        artifacts[run] = blobs
    assert artifacts["r1"].keys() == artifacts["r2"].keys()
    for key in artifacts["r1"]:
        assert artifacts["r1"][key] == artifacts["r2"][key], f"{key} differs between runs"


@criterion("smoke timing (10-video dataset generates in <5s)")
def test_gen_timing(tmp_path):
    t0 = time.perf_counter()
    rc = cli_main(["gen", "--profile", "toy", "--set", "data.num_videos=10",
                   "--out", str(tmp_path / "smoke")])
    elapsed = time.perf_counter() - t0
    assert rc == 0
    assert elapsed < 5.0, f"gen took {elapsed:.1f}s"
