"""On-disk formats: feature tensors, dataset manifests, prediction files.

Feature tensor format ("AVT1"): magic bytes, uint32-LE rank, uint32-LE
extent per axis, then row-major float32-LE payload.

Manifest format: one key=value record block per video, blank-line
separated, with repeated ``event=start,end,class`` keys. No JSON.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import EventAnnotation, FeatureSequence, VideoSample
from .errors import FormatError

TENSOR_MAGIC = b"AVT1"


def tensor_to_bytes(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype=np.float32)
    parts = [
        TENSOR_MAGIC,
        struct.pack("<I", arr.ndim),
        struct.pack(f"<{arr.ndim}I", *arr.shape),
        arr.astype("<f4", copy=False).tobytes(),
    ]
    return b"".join(parts)


def tensor_from_bytes(raw: bytes, offset: int = 0, source: str = "<bytes>") -> tuple[np.ndarray, int]:
    """Parse one tensor record; returns (array, offset past the record)."""
    magic = raw[offset : offset + 4]
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r} in {source}", offset=offset)
    pos = offset + 4
    try:
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
    except struct.error:
        raise FormatError(f"truncated tensor header in {source}", offset=pos) from None
    count = int(np.prod(shape)) if rank else 1
    payload = raw[pos : pos + 4 * count]
    if len(payload) != 4 * count:
        raise FormatError(
            f"truncated tensor payload in {source}: expected {4 * count} bytes, got {len(payload)}",
            offset=pos + len(payload),
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    return arr, pos + 4 * count


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(array))


def read_tensor(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    arr, end = tensor_from_bytes(raw, 0, source=str(path))
    if end != len(raw):
        raise FormatError(f"trailing bytes after tensor in {path}", offset=end)
    return arr


@dataclass
class ManifestEntry:
    video_id: str
    valid_len: int
    audio_path: str
    visual_path: str
    seconds_per_timestep: float = 1.0
    events: list[EventAnnotation] = field(default_factory=list)


def write_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    lines: list[str] = []
    for e in entries:
        lines.append(f"id={e.video_id}")
        lines.append(f"valid_len={e.valid_len}")
        lines.append(f"audio={e.audio_path}")
        lines.append(f"visual={e.visual_path}")
        lines.append(f"seconds_per_timestep={e.seconds_per_timestep!r}")
        for ev in e.events:
            lines.append(f"event={ev.t_start!r},{ev.t_end!r},{ev.class_id}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    entries: list[ManifestEntry] = []
    fields: dict[str, str] = {}
    events: list[EventAnnotation] = []

    def flush(line_no: int) -> None:
        if not fields and not events:
            return
        for key in ("id", "valid_len", "audio", "visual"):
            if key not in fields:
                raise FormatError(f"manifest record missing '{key}' in {path}", offset=line_no)
        entries.append(
            ManifestEntry(
                video_id=fields["id"],
                valid_len=int(fields["valid_len"]),
                audio_path=fields["audio"],
                visual_path=fields["visual"],
                seconds_per_timestep=float(fields.get("seconds_per_timestep", "1.0")),
                events=list(events),
            )
        )
        fields.clear()
        events.clear()

    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            flush(line_no)
            continue
        if "=" not in line:
            raise FormatError(f"malformed manifest line {line!r} in {path}", offset=line_no)
        key, value = line.split("=", 1)
        if key == "event":
            parts = value.split(",")
            if len(parts) != 3:
                raise FormatError(f"malformed event {value!r} in {path}", offset=line_no)
            events.append(EventAnnotation(float(parts[0]), float(parts[1]), int(parts[2])))
        else:
            fields[key] = value
    flush(-1)
    return entries


def load_video(manifest_dir: str | Path, entry: ManifestEntry) -> VideoSample:
    base = Path(manifest_dir)
    audio = read_tensor(base / entry.audio_path)
    visual = read_tensor(base / entry.visual_path)
    return VideoSample(
        video_id=entry.video_id,
        audio=FeatureSequence(audio, entry.valid_len),
        visual=FeatureSequence(visual, entry.valid_len),
        events=list(entry.events),
        seconds_per_timestep=entry.seconds_per_timestep,
    )


def load_dataset(manifest_path: str | Path) -> list[VideoSample]:
    manifest_path = Path(manifest_path)
    return [load_video(manifest_path.parent, e) for e in read_manifest(manifest_path)]


def write_predictions(path: str | Path, events_by_video: dict[str, list]) -> None:
    """Tab-separated: video_id, t_start, t_end, class_id, score (6 decimals)."""
    with open(path, "w", encoding="utf-8") as f:
        for video_id in events_by_video:
            for ev in events_by_video[video_id]:
                f.write(
                    f"{video_id}\t{ev.t_start:.6f}\t{ev.t_end:.6f}\t{ev.class_id}\t{ev.score:.6f}\n"
                )


def read_predictions(path: str | Path) -> dict[str, list]:
    from .postprocess import LocalizedEvent

    out: dict[str, list] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FormatError(f"malformed prediction line in {path}", offset=line_no)
        vid, ts, te, cid, score = parts
        out.setdefault(vid, []).append(
            LocalizedEvent(float(ts), float(te), int(cid), float(score))
        )
    return out
