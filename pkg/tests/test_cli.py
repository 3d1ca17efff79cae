"""CLI end-to-end runs on tiny data; exit codes and artifact contracts."""

import pytest

from avloc.cli import main
from avloc.evaluation import evaluate
from avloc.fileio import load_dataset, read_predictions

TINY = [
    "--set", "model.max_len=16", "--set", "model.embed_dim=8",
    "--set", "model.audio_dim=8", "--set", "model.visual_dim=12",
    "--set", "model.num_classes=2", "--set", "model.embed_depth=1",
    "--set", "model.num_levels=2", "--set", "model.num_heads=2",
]
TINY_DATA = [
    "--set", "data.max_len=16", "--set", "data.audio_dim=8",
    "--set", "data.visual_dim=12", "--set", "data.num_classes=2",
    "--set", "data.noise_level=0.02", "--set", "data.length_range=0.9,1.0",
]


def gen(tmp_path, n=4, seed=3, name="data"):
    out = tmp_path / name
    rc = main(["gen", *TINY, *TINY_DATA, "--set", f"data.num_videos={n}",
               "--set", f"data.seed={seed}", "--out", str(out)])
    assert rc == 0
    return out / "manifest.txt"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated dataset + one trained checkpoint shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    manifest = gen(root, n=4)
    run = root / "run"
    rc = main(["train", *TINY, "--data", str(manifest), "--out", str(run),
               "--epochs", "2", "--set", "train.batch_size=2",
               "--set", "train.lr=0.002"])
    assert rc == 0
    return {"root": root, "manifest": manifest, "run": run,
            "checkpoint": run / "checkpoint.ccn"}


class TestGen:
    def test_writes_manifest_features_and_config_echo(self, tmp_path):
        manifest = gen(tmp_path)
        assert manifest.exists()
        assert (manifest.parent / "config.txt").exists()
        videos = load_dataset(manifest)
        assert len(videos) == 4

    def test_seed_repeat_is_byte_identical(self, tmp_path):
        m1 = gen(tmp_path, name="a")
        m2 = gen(tmp_path, name="b")
        d1, d2 = m1.parent, m2.parent
        for name in sorted(p.name for p in d1.iterdir()):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_zero_videos_empty_manifest_exit_zero(self, tmp_path):
        out = tmp_path / "empty"
        rc = main(["gen", *TINY_DATA, "--set", "data.num_videos=0", "--out", str(out)])
        assert rc == 0
        assert (out / "manifest.txt").read_text() == ""

    def test_parallel_generation_matches_serial(self, tmp_path):
        serial = gen(tmp_path, n=6, name="serial").parent
        out = tmp_path / "parallel"
        rc = main(["gen", *TINY, *TINY_DATA, "--set", "data.num_videos=6",
                   "--set", "data.seed=3", "--workers", "2", "--out", str(out)])
        assert rc == 0
        for name in sorted(p.name for p in serial.iterdir()):
            assert (serial / name).read_bytes() == (out / name).read_bytes()

    def test_unknown_config_key_exits_two(self, tmp_path, capsys):
        rc = main(["gen", "--set", "data.bogus=1", "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "data.bogus" in capsys.readouterr().err


class TestTrain:
    def test_writes_checkpoint_log_and_echo(self, workspace):
        run = workspace["run"]
        assert (run / "checkpoint.ccn").exists()
        assert (run / "config.txt").exists()
        log_lines = (run / "train.log").read_text().strip().splitlines()
        assert len(log_lines) == 2
        assert all(len(l.split("\t")) == 5 for l in log_lines)

    def test_epochs_zero_checkpoints_initialization(self, tmp_path, workspace):
        out = tmp_path / "init_run"
        rc = main(["train", *TINY, "--data", str(workspace["manifest"]),
                   "--out", str(out), "--epochs", "0"])
        assert rc == 0
        assert (out / "checkpoint.ccn").exists()
        from avloc.checkpoint import load_checkpoint
        from avloc.model import LocalizerNetwork

        loaded, extras, _ = load_checkpoint(out / "checkpoint.ccn")
        fresh = LocalizerNetwork(loaded.cfg, seed=0)
        for (name, a), (_, b) in zip(loaded.named_parameters(), fresh.named_parameters()):
            assert a.data.tobytes() == b.data.tobytes(), name

    def test_resume_equals_uninterrupted_run(self, tmp_path, workspace):
        manifest = workspace["manifest"]
        full = tmp_path / "full"
        rc = main(["train", *TINY, "--data", str(manifest), "--out", str(full),
                   "--epochs", "4", "--set", "train.batch_size=2",
                   "--set", "train.lr=0.002"])
        assert rc == 0
        split = tmp_path / "split"
        rc = main(["train", *TINY, "--data", str(manifest), "--out", str(split),
                   "--epochs", "2", "--set", "train.batch_size=2",
                   "--set", "train.lr=0.002"])
        assert rc == 0
        rc = main(["train", *TINY, "--data", str(manifest), "--out", str(split),
                   "--epochs", "4", "--set", "train.batch_size=2",
                   "--set", "train.lr=0.002", "--resume"])
        assert rc == 0
        full_bytes = (full / "checkpoint.ccn").read_bytes()
        split_bytes = (split / "checkpoint.ccn").read_bytes()
        assert full_bytes == split_bytes

    def test_config_violation_exits_two_naming_key(self, tmp_path, workspace, capsys):
        rc = main(["train", "--set", "model.max_len=100", "--set", "model.num_levels=6",
                   "--data", str(workspace["manifest"]), "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "max_len" in capsys.readouterr().err


class TestEvalInfer:
    def test_oracle_mode_scores_one(self, tmp_path, workspace):
        out = tmp_path / "oracle_eval"
        rc = main(["eval", *TINY, "--data", str(workspace["manifest"]),
                   "--out", str(out), "--oracle"])
        assert rc == 0
        kv = dict(
            line.split("=") for line in (out / "report.kv").read_text().strip().splitlines()
        )
        assert float(kv["map_avg"]) == 1.0
        assert float(kv["map@0.9"]) == 1.0

    def test_threshold_one_scores_zero(self, tmp_path, workspace):
        out = tmp_path / "empty_eval"
        rc = main(["eval", *TINY, "--checkpoint", str(workspace["checkpoint"]),
                   "--data", str(workspace["manifest"]), "--out", str(out),
                   "--set", "nms.score_threshold=1.0"])
        assert rc == 0
        kv = dict(
            line.split("=") for line in (out / "report.kv").read_text().strip().splitlines()
        )
        assert float(kv["map_avg"]) == 0.0

    def test_report_matches_library_evaluate(self, tmp_path, workspace):
        out = tmp_path / "lib_eval"
        rc = main(["eval", *TINY, "--checkpoint", str(workspace["checkpoint"]),
                   "--data", str(workspace["manifest"]), "--out", str(out)])
        assert rc == 0
        preds = read_predictions(out / "predictions.tsv")
        videos = load_dataset(workspace["manifest"])
        gts = {v.video_id: v.events for v in videos}
        report = evaluate(preds, gts, 2)
        kv = dict(
            line.split("=") for line in (out / "report.kv").read_text().strip().splitlines()
        )
        # predictions round-trip through the 6-decimal file, so compare loosely
        assert float(kv["map_avg"]) == pytest.approx(report.average_map, abs=1e-6)

    def test_missing_checkpoint_exits_two(self, tmp_path, workspace):
        rc = main(["eval", *TINY, "--checkpoint", str(tmp_path / "nope.ccn"),
                   "--data", str(workspace["manifest"]), "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_infer_writes_predictions(self, tmp_path, workspace):
        out = tmp_path / "infer_out"
        rc = main(["infer", *TINY, "--checkpoint", str(workspace["checkpoint"]),
                   "--data", str(workspace["manifest"]), "--out", str(out)])
        assert rc == 0
        preds = read_predictions(out / "predictions.tsv")
        assert set(preds) <= {v.video_id for v in load_dataset(workspace["manifest"])}

    def test_infer_parallel_matches_serial(self, tmp_path, workspace):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        for out, workers in ((serial, "1"), (parallel, "2")):
            rc = main(["infer", *TINY, "--checkpoint", str(workspace["checkpoint"]),
                       "--data", str(workspace["manifest"]), "--out", str(out),
                       "--workers", workers])
            assert rc == 0
        assert (serial / "predictions.tsv").read_bytes() == (parallel / "predictions.tsv").read_bytes()


class TestGates:
    def test_csv_row_count_is_sum_of_level_lengths(self, tmp_path, workspace):
        out = tmp_path / "gates.csv"
        videos = load_dataset(workspace["manifest"])
        rc = main(["gates", "--checkpoint", str(workspace["checkpoint"]),
                   "--data", str(workspace["manifest"]),
                   "--video", videos[0].video_id, "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "level,t,g_audio,g_visual"
        assert len(lines) - 1 == 16 + 8  # sum of level lengths for max_len=16, two levels
        for line in lines[1:]:
            level, t, ga, gv = line.split(",")
            assert 0.0 < float(ga) < 1.0 and 0.0 < float(gv) < 1.0

    def test_unknown_video_id_exits_two(self, tmp_path, workspace, capsys):
        rc = main(["gates", "--checkpoint", str(workspace["checkpoint"]),
                   "--data", str(workspace["manifest"]),
                   "--video", "vid_99999"])
        assert rc == 2
        assert "vid_99999" in capsys.readouterr().err


class TestAblate:
    def test_two_cell_grid_produces_two_rows(self, tmp_path, workspace):
        out = tmp_path / "ablate2"
        rc = main(["ablate", *TINY, *TINY_DATA,
                   "--set", "data.num_videos=4", "--set", "train.epochs=1",
                   "--set", "train.batch_size=2",
                   "--axes", "cross_attn", "--out", str(out)])
        assert rc == 0
        rows = (out / "ablation.tsv").read_text().strip().splitlines()
        assert rows[0].split("\t")[:1] == ["cross_attn"]
        assert len(rows) == 3  # header + 2 cells

    def test_full_four_flag_grid_is_sixteen_rows(self, tmp_path):
        out = tmp_path / "ablate16"
        rc = main(["ablate", *TINY, *TINY_DATA,
                   "--set", "data.num_videos=2", "--set", "train.epochs=0",
                   "--axes", "cross_attn,temporal_gate,coarse_to_fine,fine_to_coarse",
                   "--out", str(out)])
        assert rc == 0
        rows = (out / "ablation.tsv").read_text().strip().splitlines()
        assert len(rows) == 17

    def test_reproducible_under_fixed_seed(self, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            rc = main(["ablate", *TINY, *TINY_DATA,
                       "--set", "data.num_videos=3", "--set", "train.epochs=1",
                       "--axes", "temporal_gate", "--out", str(out)])
            assert rc == 0
            outs.append((out / "ablation.tsv").read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_axis_exits_two(self, tmp_path, capsys):
        rc = main(["ablate", "--axes", "bogus_axis", "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "bogus_axis" in capsys.readouterr().err


class TestEnvSeed:
    def test_ccnet_seed_overrides_config(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CCNET_SEED", "123")
        out = tmp_path / "env_seeded"
        rc = main(["gen", *TINY_DATA, "--set", "data.num_videos=1",
                   "--set", "data.seed=7", "--out", str(out)])
        assert rc == 0
        text = (out / "config.txt").read_text()
        assert "data.seed=123" in text


class TestHelp:
    @pytest.mark.parametrize("cmd", ["gen", "train", "eval", "infer", "ablate", "gates"])
    def test_help_exits_zero_and_mentions_options(self, cmd, capsys):
        with pytest.raises(SystemExit) as err:
            main([cmd, "--help"])
        assert err.value.code == 0
        out = capsys.readouterr().out
        assert "--help" in out
        if cmd != "gates":
            assert "--out" in out
