"""Run configuration: flat ``key=value`` files with typed defaults."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # dataset: "synthetic" or a path to an embedding file
    data: str = "synthetic"
    classes: int = 21
    dim: int = 16
    samples_per_class: int = 60
    variation_dims: int = 6
    variation_scale: float = 1.0
    noise_scale: float = 0.3
    data_seed: int = 0
    split: str = "12/4/5"
    merge_val: bool = True

    seed: int = 0
    schedule: str = "oat"
    T: int = 5
    gamma: str = "0,0,1,1,2,2"
    at_decay: float = 0.9
    epochs: int = 30
    aux_epochs: int = 24
    meta_epochs: int = 6

    n_way: int = 5
    k_shot: int = 1
    queries: int = 15
    h_gen: int = 64
    episodes: int = 600

    episodes_per_epoch: int = 200
    aux_steps: int = 200
    batch_size: int = 64
    aux_lr: float = 0.05
    meta_lr: float = 0.01
    momentum: float = 0.9
    eval_every: int = 0
    eval_episodes: int = 100

    feature_dim: int = 64
    hidden: str = "128,128"
    latent_dim: int = 128
    dropout: float = 0.3
    leaky_slope: float = 0.2
    init_temperature: float = 10.0
    normalize_aux_rows: bool = True

    out: str = "runs/default"
    checkpoint: str = ""
    resume: str = ""
    stop_after: int = -1
    ablation: str = "strategy"
    seeds: int = 5
    h_values: str = "0,2,4,16,32,64"
    phase: str = "test"
    workers: int = 1

    # keys that describe the dataset and model; eval/export inherit them from the checkpoint
    DATA_KEYS = ("data", "classes", "dim", "samples_per_class", "variation_dims", "variation_scale",
                 "noise_scale", "data_seed", "split", "merge_val")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items())

    def updated(self, values: dict) -> "RunConfig":
        return dataclasses.replace(self, **coerce(values))

    @property
    def schedule_kind(self) -> str:
        return self.schedule.replace("-", "_")

    def split_counts(self) -> tuple[int, int, int]:
        parts = int_list(self.split, "split", sep="/")
        if len(parts) != 3:
            raise ConfigError(f"split must look like 12/4/5, got {self.split!r}")
        return tuple(parts)


FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(RunConfig)}


def _norm_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def coerce(values: dict) -> dict:
    out = {}
    for raw_key, value in values.items():
        key = _norm_key(raw_key)
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {raw_key!r}")
        typ = FIELD_TYPES[key]
        if isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
            out[key] = value
            continue
        text = str(value).strip()
        try:
            if typ is bool:
                if text.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(text)
                out[key] = text.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = typ(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None
    return out


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[_norm_key(key)] = value.strip()
    return values


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def int_list(text: str, name: str, sep: str = ",") -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(v) for v in text.split(sep)]
    except ValueError:
        raise ConfigError(f"{name}: expected integers separated by {sep!r}, got {text!r}") from None
