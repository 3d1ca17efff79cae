"""Flat key=value run configuration with section prefixes.

Sections: ``model.*`` (architecture), ``train.*`` (optimization),
``data.*`` (synthetic generator), ``nms.*`` (decode + suppression),
``eval.*`` (scoring). Unknown keys are rejected by name. The effective
configuration echoes back through :func:`run_config_to_text` and reparses
to the same values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .errors import ConfigurationError
from .model.config import ModelConfig
from .postprocess import DECODE_MODES, SoftNmsConfig
from .synthdata import SynthConfig
from .training.loop import TrainConfig

SEED_ENV_VAR = "CCNET_SEED"


@dataclass
class NmsSection:
    """Inference postprocessing knobs (decode threshold + Soft-NMS)."""

    method: str = "gaussian"
    sigma: float = 0.9
    iou_threshold: float = 0.5
    score_floor: float = 0.001
    pre_nms_topk: int = 2000
    max_outputs: int = 200
    score_threshold: float = 0.01
    mode: str = "multi_label"

    def __post_init__(self):
        if self.mode not in DECODE_MODES:
            raise ConfigurationError(f"nms.mode must be one of {DECODE_MODES}, got {self.mode!r}")
        self.soft_nms()  # validates the shared fields

    def soft_nms(self) -> SoftNmsConfig:
        return SoftNmsConfig(
            method=self.method, sigma=self.sigma, iou_threshold=self.iou_threshold,
            score_floor=self.score_floor, pre_nms_topk=self.pre_nms_topk,
            max_outputs=self.max_outputs,
        )


@dataclass
class EvalSection:
    interpolation: str = "all_points"

    def __post_init__(self):
        if self.interpolation not in ("all_points", "eleven_point"):
            raise ConfigurationError(
                f"eval.interpolation must be all_points or eleven_point, got {self.interpolation!r}"
            )


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SynthConfig = field(default_factory=SynthConfig)
    nms: NmsSection = field(default_factory=NmsSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def section(self, name: str):
        return getattr(self, name)


_SECTION_TYPES = {
    "model": ModelConfig,
    "train": TrainConfig,
    "data": SynthConfig,
    "nms": NmsSection,
    "eval": EvalSection,
}


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{source}:{line_no}: expected key=value, got {stripped!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _convert(key: str, value: str, kind: str):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            lowered = value.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        if kind.startswith("tuple"):
            return tuple(float(part) for part in value.split(","))
        return value
    except ValueError:
        raise ConfigurationError(f"config key {key}: cannot parse {value!r} as {kind}") from None


def run_config_from_kv(kv: dict[str, str]) -> RunConfig:
    section_kwargs: dict[str, dict[str, object]] = {name: {} for name in _SECTION_TYPES}
    for key, value in kv.items():
        if "." not in key:
            raise ConfigurationError(f"config key {key!r} missing a section prefix")
        section, name = key.split(".", 1)
        cls = _SECTION_TYPES.get(section)
        if cls is None:
            raise ConfigurationError(f"unknown config section in key {key!r}")
        types = {f.name: f.type for f in fields(cls)}
        if name not in types:
            raise ConfigurationError(f"unknown config key {key!r}")
        section_kwargs[section][name] = _convert(key, value, types[name])
    return RunConfig(**{
        name: cls(**section_kwargs[name]) for name, cls in _SECTION_TYPES.items()
    })


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    return str(value)


def run_config_to_text(rc: RunConfig) -> str:
    lines = []
    for section, cls in _SECTION_TYPES.items():
        for f in fields(cls):
            lines.append(f"{section}.{f.name}={_format_value(getattr(rc.section(section), f.name))}")
    return "\n".join(lines) + "\n"


def apply_overrides(kv: dict[str, str], overrides: list[str]) -> dict[str, str]:
    out = dict(kv)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_run_config(
    config_text: str | None = None,
    overrides: list[str] | None = None,
    source: str = "<config>",
) -> RunConfig:
    """Parse config text, apply overrides, then the seed environment variable."""
    kv = parse_kv_text(config_text, source) if config_text else {}
    kv = apply_overrides(kv, overrides or [])
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            int(env_seed)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from None
        kv["train.seed"] = env_seed
        kv["data.seed"] = env_seed
    return run_config_from_kv(kv)
