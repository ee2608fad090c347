"""Run configuration: dataclasses plus a strict JSON schema.

The JSON document has four sections (data, model, train, output). Unknown
keys are rejected with their full key path so typos never silently fall
back to defaults. ``dump_defaults()`` emits every accepted key with its
default value; feeding that document back reproduces identical behavior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass
class DataConfig:
    path: str = ""
    format: str = "csv"              # csv | bin
    zeros_as_missing: bool = False


@dataclass
class ModelConfig:
    channels: tuple[int, int, int, int] = (64, 64, 64, 64)
    head_hidden: int = 64
    horizon: int = 12
    t_in: int = 12
    attention_op: str = "max"        # max | avg | max_learned
    representative: str = "last"     # last | middle | first
    contrast_weight: float = 0.1     # JSON key: "lambda"
    use_es: bool = True
    blocks_per_stage: tuple[int, int, int, int] = (1, 2, 2, 2)
    strides: tuple[int, int, int, int] = (1, 2, 2, 2)
    norm_eps: float = 1e-5
    cosine_eps: float = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 50
    lr0: float = 0.0003
    lr_decay_every: int = 5
    lr_decay: float = 0.7
    weight_decay: float = 0.0001
    batch_size: int = 64
    seed: int = 0
    clip: float | None = None        # global gradient-norm clip; off by default


@dataclass
class OutputConfig:
    dir: str = "runs"


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


ATTENTION_OPS = ("max", "avg", "max_learned")
REPRESENTATIVES = ("last", "middle", "first")
DATA_FORMATS = ("csv", "bin")

# JSON key -> (dataclass field, parser). "lambda" keeps its wire name even
# though the Python field cannot share it.
_MODEL_KEYS = {
    "channels": "channels",
    "head_hidden": "head_hidden",
    "horizon": "horizon",
    "t_in": "t_in",
    "attention_op": "attention_op",
    "representative": "representative",
    "lambda": "contrast_weight",
    "use_es": "use_es",
}
_DATA_KEYS = {"path": "path", "format": "format", "zeros_as_missing": "zeros_as_missing"}
_TRAIN_KEYS = {k: k for k in ("epochs", "lr0", "lr_decay_every", "lr_decay",
                              "weight_decay", "batch_size", "seed", "clip")}
_OUTPUT_KEYS = {"dir": "dir"}


def _take_section(doc: dict, name: str, keys: dict[str, str]) -> dict:
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"section '{name}' must be an object")
    unknown = set(section) - set(keys)
    if unknown:
        paths = ", ".join(f"{name}.{k}" for k in sorted(unknown))
        raise ConfigError(f"unknown config keys: {paths}")
    return {keys[k]: v for k, v in section.items()}


def from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - {"data", "model", "train", "output"}
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")

    cfg = RunConfig()
    cfg = replace(cfg, data=replace(cfg.data, **_take_section(doc, "data", _DATA_KEYS)))
    model_kwargs = _take_section(doc, "model", _MODEL_KEYS)
    if "channels" in model_kwargs:
        model_kwargs["channels"] = tuple(model_kwargs["channels"])
    cfg = replace(cfg, model=replace(cfg.model, **model_kwargs))
    cfg = replace(cfg, train=replace(cfg.train, **_take_section(doc, "train", _TRAIN_KEYS)))
    cfg = replace(cfg, output=replace(cfg.output, **_take_section(doc, "output", _OUTPUT_KEYS)))
    validate(cfg)
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    return {
        "data": {
            "path": cfg.data.path,
            "format": cfg.data.format,
            "zeros_as_missing": cfg.data.zeros_as_missing,
        },
        "model": {
            "channels": list(cfg.model.channels),
            "head_hidden": cfg.model.head_hidden,
            "horizon": cfg.model.horizon,
            "t_in": cfg.model.t_in,
            "attention_op": cfg.model.attention_op,
            "representative": cfg.model.representative,
            "lambda": cfg.model.contrast_weight,
            "use_es": cfg.model.use_es,
        },
        "train": {
            "epochs": cfg.train.epochs,
            "lr0": cfg.train.lr0,
            "lr_decay_every": cfg.train.lr_decay_every,
            "lr_decay": cfg.train.lr_decay,
            "weight_decay": cfg.train.weight_decay,
            "batch_size": cfg.train.batch_size,
            "seed": cfg.train.seed,
            "clip": cfg.train.clip,
        },
        "output": {"dir": cfg.output.dir},
    }


def load(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return from_dict(doc)


def dump_defaults() -> str:
    return json.dumps(to_dict(RunConfig()), indent=2)


def validate(cfg: RunConfig) -> None:
    m, t = cfg.model, cfg.train
    if cfg.data.format not in DATA_FORMATS:
        raise ConfigError(f"data.format must be one of {DATA_FORMATS}, got {cfg.data.format!r}")
    if len(m.channels) != 4 or any(c <= 0 for c in m.channels):
        raise ConfigError(f"model.channels must be 4 positive ints, got {m.channels}")
    if m.channels[3] % 4 != 0:
        raise ConfigError(f"model.channels[3] must be divisible by 4, got {m.channels[3]}")
    if m.attention_op not in ATTENTION_OPS:
        raise ConfigError(f"model.attention_op must be one of {ATTENTION_OPS}, got {m.attention_op!r}")
    if m.representative not in REPRESENTATIVES:
        raise ConfigError(f"model.representative must be one of {REPRESENTATIVES}, got {m.representative!r}")
    if m.horizon <= 0 or m.t_in <= 0 or m.head_hidden <= 0:
        raise ConfigError("model.horizon, model.t_in and model.head_hidden must be positive")
    if m.contrast_weight < 0:
        raise ConfigError(f"model.lambda must be >= 0, got {m.contrast_weight}")
    if len(m.blocks_per_stage) != 4 or len(m.strides) != 4:
        raise ConfigError("model stages must number exactly four")
    for v, name in ((t.epochs, "epochs"), (t.lr0, "lr0"), (t.lr_decay_every, "lr_decay_every"),
                    (t.lr_decay, "lr_decay"), (t.batch_size, "batch_size")):
        if v <= 0:
            raise ConfigError(f"train.{name} must be positive, got {v}")
    if t.weight_decay < 0:
        raise ConfigError(f"train.weight_decay must be >= 0, got {t.weight_decay}")
    if t.clip is not None and t.clip <= 0:
        raise ConfigError(f"train.clip must be positive when set, got {t.clip}")
