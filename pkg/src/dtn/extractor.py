"""MLP feature extractor producing L2-normalized features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import DataError, DimensionError


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_affine(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
    return (dc.tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True),
            dc.tensor(np.zeros(fan_out), requires_grad=True))


@dataclass
class ExtractorParams:
    layers: list[tuple[Tensor, Tensor]]
    leaky_slope: float = 0.2

    def __post_init__(self):
        for i in range(1, len(self.layers)):
            prev_out = self.layers[i - 1][0].shape[1]
            if self.layers[i][0].shape[0] != prev_out:
                raise DimensionError(
                    f"layer {i} expects input width {self.layers[i][0].shape[0]}, previous layer emits {prev_out}")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"{i}.weight"] = w
            out[f"{i}.bias"] = b
        return out


def init_extractor(rng: np.random.Generator, input_dim: int, feature_dim: int = 64,
                   hidden: tuple[int, ...] = (128, 128), leaky_slope: float = 0.2) -> ExtractorParams:
    widths = [input_dim, *hidden, feature_dim]
    layers = [init_affine(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
    return ExtractorParams(layers, leaky_slope)


def extract(params: ExtractorParams, x, training: bool = False) -> Tensor:
    """Map raw inputs [B x input_dim] to unit-norm features [B x C].

    ``training`` is accepted for interface symmetry; the extractor has no
    train-time stochasticity.
    """
    x = dc.as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise DataError("extractor input contains non-finite values")
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        h = dc.affine(h, w, b)
        if i < last:
            h = dc.leaky_relu(h, params.leaky_slope)
    return dc.l2_normalize(h)
