"""Diversity-transfer feature generator.

A generated feature is ``phi2(phi1(z_s) + (phi1(z_r1) - phi1(z_r2)))``
followed by L2 normalization, where each ``phi`` is affine -> leaky ReLU ->
dropout. The offset between two same-class reference features is what gets
transplanted onto the support feature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import DimensionError
from .extractor import init_affine


@dataclass
class GeneratorParams:
    phi1: tuple[Tensor, Tensor]
    phi2: tuple[Tensor, Tensor]
    dropout_rate: float = 0.3
    leaky_slope: float = 0.2

    def __post_init__(self):
        c, c_lat = self.phi1[0].shape
        if self.phi2[0].shape != (c_lat, c):
            raise DimensionError(
                f"phi2 weight has shape {self.phi2[0].shape}, expected ({c_lat}, {c}) to invert phi1")

    @property
    def feature_dim(self) -> int:
        return self.phi1[0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.phi1[0].shape[1]

    def named_parameters(self) -> dict[str, Tensor]:
        return {"phi1.weight": self.phi1[0], "phi1.bias": self.phi1[1],
                "phi2.weight": self.phi2[0], "phi2.bias": self.phi2[1]}


def init_generator(rng: np.random.Generator, feature_dim: int = 64, latent_dim: int = 128,
                   dropout_rate: float = 0.3, leaky_slope: float = 0.2) -> GeneratorParams:
    return GeneratorParams(init_affine(rng, feature_dim, latent_dim),
                           init_affine(rng, latent_dim, feature_dim), dropout_rate, leaky_slope)


def _mapping(layer, params: GeneratorParams, z, training, rng) -> Tensor:
    h = dc.affine(z, *layer)
    h = dc.leaky_relu(h, params.leaky_slope)
    return dc.dropout(h, params.dropout_rate, training, rng)


def phi1_map(params: GeneratorParams, z, training: bool = False, rng=None) -> Tensor:
    return _mapping(params.phi1, params, z, training, rng)


def phi2_map(params: GeneratorParams, h, training: bool = False, rng=None) -> Tensor:
    return _mapping(params.phi2, params, h, training, rng)


def generate_batch(params: GeneratorParams, z_support, ref_pairs, training: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Generate one feature per (support row, reference pair).

    Output rows are ordered support-major: row ``i * H + h`` comes from
    support ``i`` and pair ``h``. With H == 0 the result is an empty
    [0 x C] tensor.
    """
    z_support = dc.as_tensor(z_support)
    z_r1, z_r2 = (dc.as_tensor(r) for r in ref_pairs)
    if z_r1.shape != z_r2.shape:
        raise DimensionError(f"reference halves differ in shape: {z_r1.shape} vs {z_r2.shape}")
    for name, z in (("support", z_support), ("reference", z_r1)):
        if z.data.ndim != 2 or z.shape[1] != params.feature_dim:
            raise DimensionError(f"{name} features axis 1 must be {params.feature_dim}, got shape {z.shape}")
    n_support, n_ref = z_support.shape[0], z_r1.shape[0]
    if n_ref == 0 or n_support == 0:
        return dc.tensor(np.zeros((0, params.feature_dim)))

    lat_s = phi1_map(params, z_support, training, rng)
    diversity = phi1_map(params, z_r1, training, rng) - phi1_map(params, z_r2, training, rng)
    # difference first, so an all-zero offset leaves lat_s bit-identical
    composite = (dc.take_rows(lat_s, np.repeat(np.arange(n_support), n_ref))
                 + dc.take_rows(diversity, np.tile(np.arange(n_ref), n_support)))
    return dc.l2_normalize(phi2_map(params, composite, training, rng))


def generate(params: GeneratorParams, z_s, z_r1, z_r2, training: bool = False, rng=None) -> Tensor:
    return generate_batch(params, z_s, (z_r1, z_r2), training, rng)
