"""Model checkpoint format ("CCN1").

Layout: magic bytes, a length-prefixed key=value text block (model config
plus training counters), then a sequence of named tensors, each encoded as
uint32-LE name length, name bytes, and an AVT1 tensor record. Optimizer
moments ride along under the reserved ``opt.`` name prefix so a resumed
run is bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fileio import tensor_from_bytes, tensor_to_bytes
from .model.config import ModelConfig
from .model.network import LocalizerNetwork
from .training.optim import Adam

CHECKPOINT_MAGIC = b"CCN1"
OPT_PREFIX = "opt."


def _config_text(cfg: ModelConfig, extras: dict[str, str]) -> str:
    lines = []
    for f in fields(ModelConfig):
        lines.append(f"model.{f.name}={getattr(cfg, f.name)}")
    for key in sorted(extras):
        lines.append(f"{key}={extras[key]}")
    return "\n".join(lines) + "\n"


def _parse_config_text(text: str) -> tuple[ModelConfig, dict[str, str]]:
    model_kwargs: dict[str, object] = {}
    extras: dict[str, str] = {}
    field_types = {f.name: f.type for f in fields(ModelConfig)}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, value = line.split("=", 1)
        if key.startswith("model."):
            name = key[len("model."):]
            kind = field_types.get(name)
            if kind is None:
                extras[key] = value
            elif kind == "bool":
                model_kwargs[name] = value == "True"
            elif kind == "int":
                model_kwargs[name] = int(value)
            elif kind == "float":
                model_kwargs[name] = float(value)
            else:
                model_kwargs[name] = value
        else:
            extras[key] = value
    return ModelConfig(**model_kwargs), extras


def save_checkpoint(
    path: str | Path,
    model: LocalizerNetwork,
    optimizer: Adam | None = None,
    extras: dict[str, str] | None = None,
) -> None:
    extras = dict(extras or {})
    if optimizer is not None:
        extras["opt.step_count"] = str(optimizer.step_count)
    text = _config_text(model.cfg, extras).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(text)), text]
    named: list[tuple[str, np.ndarray]] = list(model.named_parameters())
    records: list[tuple[str, np.ndarray]] = [(name, p.data) for name, p in named]
    if optimizer is not None:
        for key, arr in optimizer.state_arrays().items():
            records.append((OPT_PREFIX + key, arr))
    for name, arr in records:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(tensor_to_bytes(arr))
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, str], dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r} in {path}", offset=0)
    pos = 4
    try:
        (text_len,) = struct.unpack_from("<I", raw, pos)
    except struct.error:
        raise FormatError(f"truncated checkpoint header in {path}", offset=pos) from None
    pos += 4
    text = raw[pos : pos + text_len]
    if len(text) != text_len:
        raise FormatError(f"truncated checkpoint config block in {path}", offset=pos)
    pos += text_len
    cfg, extras = _parse_config_text(text.decode("utf-8"))
    tensors: dict[str, np.ndarray] = {}
    while pos < len(raw):
        try:
            (name_len,) = struct.unpack_from("<I", raw, pos)
        except struct.error:
            raise FormatError(f"truncated tensor name length in {path}", offset=pos) from None
        pos += 4
        name = raw[pos : pos + name_len]
        if len(name) != name_len:
            raise FormatError(f"truncated tensor name in {path}", offset=pos)
        pos += name_len
        arr, pos = tensor_from_bytes(raw, pos, source=str(path))
        tensors[name.decode("utf-8")] = arr
    return cfg, extras, tensors


def load_checkpoint(
    path: str | Path, dtype=np.float32
) -> tuple[LocalizerNetwork, dict[str, str], dict[str, np.ndarray]]:
    """Rebuild the model; optimizer moment arrays are returned separately."""
    cfg, extras, tensors = read_checkpoint(path)
    model = LocalizerNetwork(cfg, seed=0, dtype=dtype)
    for name, param in model.named_parameters():
        arr = tensors.get(name)
        if arr is None:
            raise FormatError(f"checkpoint {path} missing parameter {name!r}")
        if tuple(arr.shape) != param.shape:
            raise FormatError(
                f"checkpoint {path} parameter {name!r} has shape {arr.shape}, expected {param.shape}"
            )
        param.data = arr.astype(dtype)
        param.grad = np.zeros_like(param.data)
    opt_state = {
        key[len(OPT_PREFIX):]: arr for key, arr in tensors.items() if key.startswith(OPT_PREFIX)
    }
    return model, extras, opt_state


def restore_optimizer(model: LocalizerNetwork, extras: dict[str, str],
                      opt_state: dict[str, np.ndarray], **adam_kwargs) -> Adam:
    optimizer = Adam(model.parameters(), **adam_kwargs)
    if opt_state:
        optimizer.load_state_arrays(opt_state, int(extras.get("opt.step_count", "0")))
    return optimizer
