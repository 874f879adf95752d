"""Trainable state: extractor, generator, auxiliary head and meta temperature."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor
from .extractor import ExtractorParams, init_extractor
from .generator import GeneratorParams, init_generator
from .metaclassifier import (DEFAULT_TEMPERATURE, AuxiliaryHead, MetaTemperature, init_aux_head,
                             init_meta_temperature)

AUX_GROUPS = ("extractor", "aux_head")
META_GROUPS = ("extractor", "generator", "meta_alpha")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    n_aux_classes: int
    feature_dim: int = 64
    hidden: tuple[int, ...] = (128, 128)
    latent_dim: int = 128
    dropout_rate: float = 0.3
    leaky_slope: float = 0.2
    init_temperature: float = DEFAULT_TEMPERATURE
    normalize_aux_rows: bool = True

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", ()))
        return cls(**d)


@dataclass
class ModelState:
    config: ModelConfig
    extractor: ExtractorParams
    generator: GeneratorParams
    aux_head: AuxiliaryHead
    meta_alpha: MetaTemperature
    step_count: int = 0

    def named_parameters(self, groups=None) -> dict[str, Tensor]:
        """Flat ``group.name -> Tensor`` mapping in a fixed order."""
        params: dict[str, Tensor] = {}
        if groups is None or "extractor" in groups:
            params.update({f"extractor.{k}": v for k, v in self.extractor.named_parameters().items()})
        if groups is None or "generator" in groups:
            params.update({f"generator.{k}": v for k, v in self.generator.named_parameters().items()})
        if groups is None or "aux_head" in groups:
            params.update({f"aux_head.{k}": v for k, v in self.aux_head.named_parameters().items()})
        if groups is None or "meta_alpha" in groups:
            params["meta_alpha"] = self.meta_alpha.alpha
        return params

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameter arrays: {sorted(missing)}")
        for name, t in params.items():
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.shape != t.shape:
                raise ValueError(f"{name}: stored shape {a.shape} != model shape {t.shape}")
            t.data = a.copy()
            t.zero_grad()


def init_model(cfg: ModelConfig, rng: np.random.Generator) -> ModelState:
    extractor = init_extractor(rng, cfg.input_dim, cfg.feature_dim, cfg.hidden, cfg.leaky_slope)
    generator = init_generator(rng, cfg.feature_dim, cfg.latent_dim, cfg.dropout_rate, cfg.leaky_slope)
    head = init_aux_head(rng, cfg.n_aux_classes, cfg.feature_dim, cfg.init_temperature,
                         cfg.normalize_aux_rows)
    return ModelState(cfg, extractor, generator, head, init_meta_temperature(cfg.init_temperature))


def checksum(arrays: dict[str, np.ndarray], prefix: str = "") -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        if name.startswith(prefix):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()


def group_snapshot(state: ModelState, group: str) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in state.named_parameters((group,)).items()}
