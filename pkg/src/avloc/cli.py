"""Command-line pipeline: gen, train, eval, infer, ablate, gates.

Every command echoes its effective configuration into the output directory
and exits 0 on success, 2 on usage or configuration errors, 1 on internal
errors. The ``CCNET_SEED`` environment variable overrides configured seeds.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .autodiff import no_grad
from .checkpoint import load_checkpoint, restore_optimizer, save_checkpoint
from .configfile import RunConfig, load_run_config, run_config_to_text
from .data import VideoSample
from .errors import AvlocError, ConfigurationError, FormatError
from .evaluation import evaluate, format_report, report_keyvalues
from .fileio import load_dataset, write_predictions
from .model.network import LocalizerNetwork
from .postprocess import LocalizedEvent, infer_events
from .synthdata import SynthConfig, dataset_summary, generate_dataset, generate_video
from .training.loop import train

ABLATION_AXES = {
    "cross_attn": (True, False),
    "temporal_gate": (True, False),
    "coarse_to_fine": (True, False),
    "fine_to_coarse": (True, False),
    "mix_order": ("c2f_first", "f2c_first"),
    "fusion_scope": ("adjacent", "all"),
    "gate_modalities": ("both", "audio_only", "visual_only"),
}
DEFAULT_AXES = "cross_attn,temporal_gate,coarse_to_fine,fine_to_coarse"


# -- configuration plumbing ---------------------------------------------------

def _profile_text(name: str) -> str:
    try:
        return (resources.files("avloc") / "profiles" / f"{name}.cfg").read_text("utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"unknown profile {name!r} (expected toy or paper)") from None


def _resolve_config(args) -> RunConfig:
    texts = []
    if getattr(args, "profile", None):
        texts.append(_profile_text(args.profile))
    if getattr(args, "config", None):
        texts.append(Path(args.config).read_text("utf-8"))
    merged = "\n".join(texts)
    return load_run_config(merged or None, overrides=list(getattr(args, "set", []) or []))


def _echo_config(rc: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(run_config_to_text(rc), encoding="utf-8")


# -- inference helpers ---------------------------------------------------------

_WORKER_STATE: dict = {}


def _infer_worker_init(checkpoint_path: str, nms_kwargs: dict, manifest: str) -> None:
    from .configfile import NmsSection

    model, _, _ = load_checkpoint(checkpoint_path)
    _WORKER_STATE["model"] = model
    _WORKER_STATE["nms"] = NmsSection(**nms_kwargs)
    _WORKER_STATE["videos"] = {v.video_id: v for v in load_dataset(manifest)}


def _infer_worker(video_id: str) -> tuple[str, list[LocalizedEvent]]:
    model = _WORKER_STATE["model"]
    nms = _WORKER_STATE["nms"]
    video = _WORKER_STATE["videos"][video_id]
    with no_grad():
        result = model.forward(video.audio, video.visual)
    events = infer_events(
        result, video.valid_len, nms.soft_nms(),
        score_threshold=nms.score_threshold, mode=nms.mode,
    )
    return video_id, events


def run_inference(
    model: LocalizerNetwork,
    dataset: list[VideoSample],
    rc: RunConfig,
    workers: int = 1,
    checkpoint_path: str | None = None,
    manifest: str | None = None,
) -> dict[str, list[LocalizedEvent]]:
    if workers > 1 and checkpoint_path and manifest:
        nms_kwargs = dataclasses.asdict(rc.nms)
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_infer_worker_init,
            initargs=(checkpoint_path, nms_kwargs, manifest),
        ) as pool:
            results = dict(pool.map(_infer_worker, [v.video_id for v in dataset]))
        return {v.video_id: results[v.video_id] for v in dataset}
    out: dict[str, list[LocalizedEvent]] = {}
    for video in dataset:
        with no_grad():
            result = model.forward(video.audio, video.visual)
        out[video.video_id] = infer_events(
            result, video.valid_len, rc.nms.soft_nms(),
            score_threshold=rc.nms.score_threshold, mode=rc.nms.mode,
        )
    return out


# -- commands ------------------------------------------------------------------

def _gen_one(cfg: SynthConfig, index: int, out_dir: str):
    from .fileio import ManifestEntry, write_tensor

    video = generate_video(cfg, index)
    audio_path = f"{video.video_id}.a.avt"
    visual_path = f"{video.video_id}.v.avt"
    write_tensor(Path(out_dir) / audio_path, video.audio.values)
    write_tensor(Path(out_dir) / visual_path, video.visual.values)
    return ManifestEntry(
        video_id=video.video_id, valid_len=video.valid_len,
        audio_path=audio_path, visual_path=visual_path,
        seconds_per_timestep=cfg.seconds_per_timestep, events=video.events,
    )


def cmd_gen(args) -> int:
    rc = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out_dir)
    if args.workers > 1 and rc.data.num_videos > 1:
        from .fileio import write_manifest

        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            entries = list(
                pool.map(_gen_one, *zip(*[(rc.data, i, str(out_dir)) for i in range(rc.data.num_videos)]))
            )
        write_manifest(out_dir / "manifest.txt", entries)
    else:
        entries = generate_dataset(rc.data, out_dir)
    print(dataset_summary(entries))
    return 0


def cmd_train(args) -> int:
    rc = _resolve_config(args)
    if args.epochs is not None:
        rc.train.epochs = args.epochs
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out_dir)
    dataset = load_dataset(args.data)
    checkpoint_path = out_dir / "checkpoint.ccn"
    start_epoch = 0
    optimizer = None
    if args.resume and checkpoint_path.exists():
        model, extras, opt_state = load_checkpoint(checkpoint_path)
        optimizer = restore_optimizer(
            model, extras, opt_state,
            lr=rc.train.lr, weight_decay=rc.train.weight_decay,
            warmup_steps=rc.train.warmup_steps,
        )
        start_epoch = int(extras.get("train.completed_epochs", "0"))
    else:
        model = LocalizerNetwork(rc.model, seed=rc.train.seed)
    optimizer, _ = train(
        model, dataset, rc.train,
        optimizer=optimizer, start_epoch=start_epoch, log_path=out_dir / "train.log",
    )
    save_checkpoint(
        checkpoint_path, model, optimizer,
        extras={"train.completed_epochs": str(rc.train.epochs), "train.seed": str(rc.train.seed)},
    )
    print(f"checkpoint written to {checkpoint_path}")
    return 0


def _oracle_predictions(dataset: list[VideoSample]) -> dict[str, list[LocalizedEvent]]:
    return {
        v.video_id: [
            LocalizedEvent(ev.t_start, ev.t_end, ev.class_id, 1.0) for ev in v.events
        ]
        for v in dataset
    }


def cmd_eval(args) -> int:
    rc = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out_dir)
    dataset = load_dataset(args.data)
    if args.oracle:
        preds = _oracle_predictions(dataset)
    else:
        if not args.checkpoint:
            raise ConfigurationError("eval requires --checkpoint (or --oracle)")
        model, _, _ = load_checkpoint(args.checkpoint)
        preds = run_inference(
            model, dataset, rc, workers=args.workers,
            checkpoint_path=args.checkpoint, manifest=args.data,
        )
    gts = {v.video_id: v.events for v in dataset}
    spt = dataset[0].seconds_per_timestep if dataset else 1.0
    report = evaluate(
        preds, gts, rc.model.num_classes,
        seconds_per_timestep=spt, interpolation=rc.eval.interpolation,
    )
    write_predictions(out_dir / "predictions.tsv", preds)
    (out_dir / "report.txt").write_text(format_report(report) + "\n", encoding="utf-8")
    (out_dir / "report.kv").write_text(report_keyvalues(report) + "\n", encoding="utf-8")
    print(format_report(report))
    return 0


def cmd_infer(args) -> int:
    rc = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out_dir)
    dataset = load_dataset(args.data)
    model, _, _ = load_checkpoint(args.checkpoint)
    preds = run_inference(
        model, dataset, rc, workers=args.workers,
        checkpoint_path=args.checkpoint, manifest=args.data,
    )
    write_predictions(out_dir / "predictions.tsv", preds)
    print(f"predictions written to {out_dir / 'predictions.tsv'}")
    return 0


def cmd_gates(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    matches = [v for v in dataset if v.video_id == args.video]
    if not matches:
        raise ConfigurationError(f"unknown video id {args.video!r}")
    video = matches[0]
    with no_grad():
        result = model.forward(video.audio, video.visual)
    lines = ["level,t,g_audio,g_visual"]
    for level, pair in enumerate(result.gates):
        for t in range(len(pair.audio)):
            lines.append(f"{level},{t},{pair.audio[t]:.6f},{pair.visual[t]:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"gate curves written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_ablate(args) -> int:
    rc = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(rc, out_dir)
    axes = [a.strip() for a in args.axes.split(",") if a.strip()]
    for axis in axes:
        if axis not in ABLATION_AXES:
            raise ConfigurationError(
                f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}"
            )

    if args.data:
        train_set = load_dataset(args.data)
        eval_set = load_dataset(args.eval_data) if args.eval_data else train_set
    else:
        train_set = [generate_video(rc.data, i) for i in range(rc.data.num_videos)]
        eval_cfg = dataclasses.replace(rc.data, seed=rc.data.seed + 1,
                                       num_videos=max(4, rc.data.num_videos // 5))
        eval_set = [generate_video(eval_cfg, i) for i in range(eval_cfg.num_videos)]

    grids: list[dict] = [{}]
    for axis in axes:
        grids = [dict(g, **{axis: value}) for g in grids for value in ABLATION_AXES[axis]]

    thresholds = (0.5, 0.6, 0.7, 0.8, 0.9)
    header = axes + [f"map@{t:.1f}" for t in thresholds] + ["avg"]
    rows = [header]
    for cell in grids:
        tag = " ".join(f"{k}={v}" for k, v in cell.items())
        try:
            model_cfg = dataclasses.replace(rc.model, **cell)
            model = LocalizerNetwork(model_cfg, seed=rc.train.seed)
            train(model, train_set, rc.train)
            cell_rc = RunConfig(model=model_cfg, train=rc.train, data=rc.data,
                                nms=rc.nms, eval=rc.eval)
            preds = run_inference(model, eval_set, cell_rc)
            gts = {v.video_id: v.events for v in eval_set}
            report = evaluate(preds, gts, model_cfg.num_classes)
            row = [str(cell[a]) for a in axes]
            row += [f"{report.map_at[t]:.4f}" for t in thresholds]
            row += [f"{report.average_map:.4f}"]
            rows.append(row)
            print(f"cell [{tag}] avg mAP {report.average_map:.4f}")
        except Exception as exc:  # keep sweeping; mark the failed cell
            rows.append([str(cell[a]) for a in axes] + ["FAILED"] * 5 + [str(exc)[:60]])
            print(f"cell [{tag}] FAILED: {exc}", file=sys.stderr)
    table = "\n".join("\t".join(row) for row in rows) + "\n"
    (out_dir / "ablation.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


# -- argument parsing -----------------------------------------------------------

def _add_config_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a key=value config file")
    p.add_argument("--profile", choices=("toy", "paper"), help="built-in config profile")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avloc",
        description="Dense audio-visual event localization pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_config_opts(p)
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel video generation")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a dataset")
    _add_config_opts(p)
    p.add_argument("--data", required=True, help="path to manifest.txt")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p.add_argument("--resume", action="store_true", help="resume from existing checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="inference + scoring")
    _add_config_opts(p)
    p.add_argument("--checkpoint", help="path to a CCN1 checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", action="store_true",
                   help="score ground truth as predictions (sanity mode)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="inference only; writes predictions.tsv")
    _add_config_opts(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="flag-grid sweep: train + eval per cell")
    _add_config_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="training manifest (default: generate synthetically)")
    p.add_argument("--eval-data", help="evaluation manifest")
    p.add_argument("--axes", default=DEFAULT_AXES,
                   help=f"comma-separated axes (default {DEFAULT_AXES})")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gates", help="export consistency-gate curves as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--video", required=True, help="video id from the manifest")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_gates)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AvlocError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # no tracebacks on malformed inputs
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
