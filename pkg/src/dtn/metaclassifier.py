"""Averaged-proxy cosine classifier, the meta loss and the auxiliary loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import DegenerateProxyError, DimensionError
from .extractor import glorot_uniform

PROXY_EPS = 1e-12
DEFAULT_TEMPERATURE = 10.0


@dataclass
class ProxyMatrix:
    W: Tensor
    class_ids: list = field(default_factory=list)


@dataclass
class AuxiliaryHead:
    W_aux: Tensor
    alpha_aux: Tensor
    normalize_rows: bool = True

    @property
    def n_classes(self) -> int:
        return self.W_aux.shape[0]

    def named_parameters(self) -> dict[str, Tensor]:
        return {"weight": self.W_aux, "alpha": self.alpha_aux}


@dataclass
class MetaTemperature:
    alpha: Tensor


def init_aux_head(rng: np.random.Generator, n_classes: int, feature_dim: int,
                  alpha: float = DEFAULT_TEMPERATURE, normalize_rows: bool = True) -> AuxiliaryHead:
    w = glorot_uniform(rng, feature_dim, n_classes).T.copy()
    return AuxiliaryHead(dc.tensor(w, requires_grad=True),
                         dc.tensor(alpha, requires_grad=True), normalize_rows)


def init_meta_temperature(alpha: float = DEFAULT_TEMPERATURE) -> MetaTemperature:
    return MetaTemperature(dc.tensor(alpha, requires_grad=True))


def averaging_matrix(support_labels, n_way: int, n_generated_per_support: int) -> np.ndarray:
    """Row n averages every support and generated row that belongs to class n.

    Columns are laid out as [supports..., generated...] with generated row
    ``i * H + h`` inheriting the label of support ``i``.
    """
    support_labels = np.asarray(support_labels, dtype=np.intp)
    labels = np.concatenate([support_labels, np.repeat(support_labels, n_generated_per_support)])
    a = np.zeros((n_way, labels.size))
    a[labels, np.arange(labels.size)] = 1.0
    counts = a.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise DimensionError(f"classes {np.flatnonzero(counts[:, 0] == 0).tolist()} have no support rows")
    return a / counts


def build_proxies(z_support, z_generated, support_labels, n_way: int, class_ids=None) -> ProxyMatrix:
    z_support, z_generated = dc.as_tensor(z_support), dc.as_tensor(z_generated)
    n_support = z_support.shape[0]
    if z_generated.shape[0] % max(n_support, 1):
        raise DimensionError(
            f"generated rows ({z_generated.shape[0]}) are not a multiple of support rows ({n_support})")
    h = z_generated.shape[0] // n_support if n_support else 0
    avg = averaging_matrix(support_labels, n_way, h)
    feats = z_support if h == 0 else dc.concat_rows([z_support, z_generated])
    w_hat = dc.matmul(avg, feats)
    norms = np.linalg.norm(w_hat.data, axis=1)
    if np.any(norms < PROXY_EPS):
        bad = np.flatnonzero(norms < PROXY_EPS).tolist()
        raise DegenerateProxyError(f"proxy rows {bad} have norm below {PROXY_EPS} (antipodal features)")
    ids = list(class_ids) if class_ids is not None else list(range(n_way))
    return ProxyMatrix(dc.l2_normalize(w_hat), ids)


def score_query(z_q, proxies: ProxyMatrix) -> Tensor:
    """Cosine scores [Q x N] between unit-norm queries and proxy rows."""
    return dc.matmul(z_q, dc.transpose(proxies.W))


def meta_loss(scores, alpha: MetaTemperature, labels) -> Tensor:
    return dc.scaled_cross_entropy(scores, alpha.alpha, labels)


def auxiliary_loss(z_batch, head: AuxiliaryHead, labels) -> Tensor:
    w = head.W_aux
    if head.normalize_rows:
        w = dc.l2_normalize(w)
    scores = dc.matmul(z_batch, dc.transpose(w))
    return dc.scaled_cross_entropy(scores, head.alpha_aux, labels)
