"""Class-disjoint dataset splits and N-way K-shot episode sampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SamplingError

PHASES = ("train", "val", "test")


@dataclass
class Dataset:
    """Labeled feature vectors; ``split`` maps class label -> train/val/test.

    Class order within a split follows the order the classes were passed to
    :func:`split_dataset`, which fixes the auxiliary label indexing.
    """
    x: np.ndarray
    labels: np.ndarray
    split: dict = field(default_factory=dict)
    split_order: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.x.ndim != 2 or self.labels.shape != (self.x.shape[0],):
            raise ConfigError(f"x must be [n x d] with one label per row; got {self.x.shape}, {self.labels.shape}")
        self.class_index = {}
        for i, c in enumerate(self.labels.tolist()):
            self.class_index.setdefault(c, []).append(i)
        self.class_index = {c: np.asarray(v, dtype=np.intp) for c, v in self.class_index.items()}

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def classes(self) -> list:
        return list(self.class_index)

    def classes_in(self, phase: str) -> list:
        if phase not in PHASES:
            raise ConfigError(f"unknown phase {phase!r}")
        return list(self.split_order.get(phase, []))


def split_dataset(raw: Dataset, train_classes, val_classes=(), test_classes=(),
                  merge_val: bool = False) -> Dataset:
    """Assign pairwise-disjoint class lists; ``merge_val`` folds val into train."""
    groups = {"train": list(train_classes), "val": list(val_classes), "test": list(test_classes)}
    seen: dict = {}
    for phase, classes in groups.items():
        for c in classes:
            if c in seen:
                raise ConfigError(f"class {c!r} assigned to both {seen[c]} and {phase}")
            if c not in raw.class_index:
                raise ConfigError(f"class {c!r} not present in dataset")
            seen[c] = phase
    if merge_val:
        groups = {"train": groups["train"] + groups["val"], "val": [], "test": groups["test"]}
    split = {c: phase for phase, classes in groups.items() for c in classes}
    return Dataset(raw.x, raw.labels, split, groups)


def split_by_counts(raw: Dataset, counts: tuple[int, int, int], merge_val: bool = False) -> Dataset:
    """Split classes in order of first appearance into train/val/test blocks."""
    classes = raw.classes
    n_train, n_val, n_test = counts
    if n_train + n_val + n_test > len(classes):
        raise ConfigError(f"split {counts} needs {sum(counts)} classes, dataset has {len(classes)}")
    return split_dataset(raw, classes[:n_train], classes[n_train:n_train + n_val],
                         classes[n_train + n_val:n_train + n_val + n_test], merge_val)


@dataclass(frozen=True)
class EpisodeConfig:
    n_way: int = 5
    k_shot: int = 1
    queries: int = 15
    h_gen: int = 64

    def __post_init__(self):
        if self.n_way < 2 or self.k_shot < 1 or self.queries < 1 or self.h_gen < 0:
            raise ConfigError(f"invalid episode config {self}")


@dataclass
class Episode:
    """One task. Support/query labels are episode-class indices in [0, N).

    Support rows are class-major (row ``n * K + k``); ``*_index`` fields are
    dataset item indices kept for protocol checks and exports.
    """
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    ref1_x: np.ndarray
    ref2_x: np.ndarray
    episode_classes: list
    ref_classes: list
    support_index: np.ndarray
    query_index: np.ndarray
    ref_index: np.ndarray  # [H x 2]

    @property
    def n_way(self) -> int:
        return len(self.episode_classes)


def sample_episode(ds: Dataset, cfg: EpisodeConfig, phase: str, rng: np.random.Generator) -> Episode:
    if phase not in ("train", "val", "test"):
        raise ConfigError(f"phase must be train, val or test, got {phase!r}")
    pool = ds.classes_in(phase)
    if len(pool) < cfg.n_way:
        raise SamplingError(f"{phase} split has {len(pool)} classes, need {cfg.n_way}")
    train_pool = ds.classes_in("train")
    if cfg.h_gen and not train_pool:
        raise SamplingError("reference pairs need a non-empty train split")

    chosen = [pool[i] for i in rng.choice(len(pool), size=cfg.n_way, replace=False)]
    per_class = cfg.k_shot + cfg.queries
    support_idx, query_idx = [], []
    for c in chosen:
        items = ds.class_index[c]
        if items.size < per_class:
            raise SamplingError(f"class {c!r} has {items.size} items, need K+Q={per_class}")
        picked = items[rng.choice(items.size, size=per_class, replace=False)]
        support_idx.append(picked[:cfg.k_shot])
        query_idx.append(picked[cfg.k_shot:])
    support_idx = np.concatenate(support_idx)
    query_idx = np.concatenate(query_idx)

    ref_classes = [train_pool[i] for i in rng.integers(len(train_pool), size=cfg.h_gen)]
    ref_idx = np.zeros((cfg.h_gen, 2), dtype=np.intp)
    for h, c in enumerate(ref_classes):
        items = ds.class_index[c]
        if items.size < 2:
            raise SamplingError(f"reference class {c!r} has {items.size} item(s), need 2")
        ref_idx[h] = items[rng.choice(items.size, size=2, replace=False)]
    for i in ref_idx.ravel():
        # protocol guard: references never come from outside the train split
        assert ds.split.get(ds.labels[i].item()) == "train", f"reference item {i} not from a train class"

    return Episode(
        support_x=ds.x[support_idx], support_y=np.repeat(np.arange(cfg.n_way), cfg.k_shot),
        query_x=ds.x[query_idx], query_y=np.repeat(np.arange(cfg.n_way), cfg.queries),
        ref1_x=ds.x[ref_idx[:, 0]], ref2_x=ds.x[ref_idx[:, 1]],
        episode_classes=chosen, ref_classes=ref_classes,
        support_index=support_idx, query_index=query_idx, ref_index=ref_idx,
    )


def sample_aux_batch(ds: Dataset, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform minibatch over all train items, labels re-indexed to [0, N')."""
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    items, labels = train_items(ds)
    if items.size == 0:
        raise ConfigError("train split is empty")
    pick = rng.integers(items.size, size=batch_size)
    return ds.x[items[pick]], labels[pick]


def train_label_map(ds: Dataset) -> dict:
    return {c: i for i, c in enumerate(ds.classes_in("train"))}


def train_items(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """All train item indices with their re-indexed labels."""
    mapping = train_label_map(ds)
    idx = [ds.class_index[c] for c in mapping]
    if not idx:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    items = np.concatenate(idx)
    labels = np.concatenate([np.full(ds.class_index[c].size, i, dtype=np.intp) for c, i in mapping.items()])
    return items, labels
