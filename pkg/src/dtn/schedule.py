"""Epoch-kind sequences: organized co-training (OAT), stochastic AT, naive, two-stage."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError

KINDS = ("oat", "at", "naive", "two_stage")

# AT reference point: at decay 0.9 over 30 epochs the expected number of meta
# epochs is 6 (24 auxiliary : 6 meta).
AT_REFERENCE_EPOCHS = 30
AT_REFERENCE_DECAY = 0.9
AT_REFERENCE_META = 6.0


class EpochKind(enum.Enum):
    AUX = "A"
    META = "M"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "oat"
    T: int = 5
    gamma: tuple[int, ...] = (0, 0, 1, 1, 2, 2)
    at_decay: float = 0.9
    total_epochs: int = 30
    aux_epochs: int = 24
    meta_epochs: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"schedule kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "gamma", tuple(int(g) for g in self.gamma))


def build_oat(spec: ScheduleSpec) -> list[EpochKind]:
    """Unit i contributes (T - gamma_i) auxiliary epochs, then gamma_i meta epochs."""
    if spec.T < 1:
        raise ConfigError(f"T must be >= 1, got {spec.T}")
    out: list[EpochKind] = []
    for i, g in enumerate(spec.gamma):
        if not 0 <= g <= spec.T:
            raise ConfigError(f"gamma[{i}]={g} outside [0, T={spec.T}]")
        out += [EpochKind.AUX] * (spec.T - g) + [EpochKind.META] * g
    return out


@lru_cache(maxsize=None)
def _at_rate() -> float:
    epochs = np.arange(AT_REFERENCE_EPOCHS)

    def excess(k):
        return float(np.sum(1.0 - AT_REFERENCE_DECAY ** (k * epochs))) - AT_REFERENCE_META

    return brentq(excess, 1e-9, 10.0, xtol=1e-15)


def at_aux_probabilities(total_epochs: int, decay: float) -> np.ndarray:
    """Per-epoch auxiliary probability, exponentially annealed over the run."""
    if not 0.0 < decay <= 1.0:
        raise ConfigError(f"AT decay must be in (0, 1], got {decay}")
    e = np.arange(total_epochs, dtype=np.float64)
    return decay ** (_at_rate() * e * AT_REFERENCE_EPOCHS / max(total_epochs, 1))


def expected_at_meta_count(total_epochs: int, decay: float) -> float:
    return float(np.sum(1.0 - at_aux_probabilities(total_epochs, decay)))


def build_at(spec: ScheduleSpec, rng: np.random.Generator | None = None) -> list[EpochKind]:
    if spec.total_epochs < 1:
        raise ConfigError(f"AT needs total_epochs >= 1, got {spec.total_epochs}")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    p_aux = at_aux_probabilities(spec.total_epochs, spec.at_decay)
    draws = rng.random(spec.total_epochs)
    return [EpochKind.AUX if u < p else EpochKind.META for u, p in zip(draws, p_aux)]


def build_naive(total: int) -> list[EpochKind]:
    if total < 0:
        raise ConfigError(f"epoch count must be >= 0, got {total}")
    return [EpochKind.META] * total


def build_two_stage(aux_epochs: int, meta_epochs: int) -> list[EpochKind]:
    if aux_epochs < 0 or meta_epochs < 0:
        raise ConfigError(f"epoch counts must be >= 0, got {aux_epochs}, {meta_epochs}")
    return [EpochKind.AUX] * aux_epochs + [EpochKind.META] * meta_epochs


def build_schedule(spec: ScheduleSpec) -> list[EpochKind]:
    if spec.kind == "oat":
        return build_oat(spec)
    if spec.kind == "at":
        return build_at(spec)
    if spec.kind == "naive":
        return build_naive(spec.total_epochs)
    return build_two_stage(spec.aux_epochs, spec.meta_epochs)


def to_string(seq) -> str:
    return "".join(k.value for k in seq)


def parse_schedule(text: str) -> list[EpochKind]:
    try:
        return [EpochKind(ch) for ch in text.strip()]
    except ValueError as exc:
        raise ConfigError(f"schedule strings use only 'A' and 'M': {text!r}") from exc


def run_lengths(seq) -> str:
    """Compact form like ``13A-1M-2A`` for logs; accepts kinds or an 'A'/'M' string."""
    s = seq if isinstance(seq, str) else to_string(seq)
    if not s:
        return ""
    parts, start = [], 0
    for i in range(1, len(s) + 1):
        if i == len(s) or s[i] != s[start]:
            parts.append(f"{i - start}{s[start]}")
            start = i
    return "-".join(parts)
