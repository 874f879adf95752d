import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dtn.data import SyntheticSpec, gen_synthetic
from dtn.episodes import (Dataset, EpisodeConfig, sample_aux_batch, sample_episode, split_by_counts,
                          split_dataset, train_items, train_label_map)
from dtn.errors import ConfigError, SamplingError


@pytest.fixture(scope="module")
def raw():
    return gen_synthetic(SyntheticSpec(class_count=21, samples_per_class=20))


@pytest.fixture(scope="module")
def ds(raw):
    return split_by_counts(raw, (12, 4, 5))


def test_split_is_disjoint(ds):
    train, val, test = (set(ds.classes_in(p)) for p in ("train", "val", "test"))
    assert len(train) == 12 and len(val) == 4 and len(test) == 5
    assert not (train & val or train & test or val & test)


def test_overlapping_lists_rejected():
    raw = Dataset(np.zeros((2, 1)), ["a", "b"])
    with pytest.raises(ConfigError):
        split_dataset(raw, ["a"], ["a"], [])


def test_unknown_class_rejected():
    with pytest.raises(ConfigError):
        split_dataset(Dataset(np.zeros((1, 1)), ["a"]), ["a"], [], ["z"])


def test_merge_val_into_train(raw):
    merged = split_by_counts(raw, (12, 4, 5), merge_val=True)
    assert len(merged.classes_in("train")) == 16 and merged.classes_in("val") == []


def test_episode_counts(ds):
    ep = sample_episode(ds, EpisodeConfig(5, 1, 15, 3), "train", np.random.default_rng(0))
    assert ep.support_x.shape == (5, 16) and ep.query_x.shape == (75, 16)
    assert ep.ref1_x.shape == ep.ref2_x.shape == (3, 16) and ep.ref_index.shape == (3, 2)
    np.testing.assert_array_equal(ep.support_y, np.arange(5))
    np.testing.assert_array_equal(np.bincount(ep.query_y), [15] * 5)


def test_k_shot_rows_class_major(ds):
    ep = sample_episode(ds, EpisodeConfig(3, 2, 4, 0), "train", np.random.default_rng(1))
    np.testing.assert_array_equal(ep.support_y, [0, 0, 1, 1, 2, 2])
    for row, y in zip(ep.support_index, ep.support_y):
        assert ds.labels[row] == ep.episode_classes[y]


def test_test_phase_references_are_train_only(ds):
    train = set(ds.classes_in("train"))
    for seed in range(50):
        ep = sample_episode(ds, EpisodeConfig(5, 1, 15, 8), "test", np.random.default_rng(seed))
        assert set(ep.episode_classes) <= set(ds.classes_in("test"))
        assert {ds.labels[i].item() for i in ep.ref_index.ravel()} <= train
        assert all(a != b and ds.labels[a] == ds.labels[b] for a, b in ep.ref_index)


def test_same_seed_same_episode(ds):
    cfg = EpisodeConfig(5, 1, 15, 4)
    a = sample_episode(ds, cfg, "test", np.random.default_rng(9))
    b = sample_episode(ds, cfg, "test", np.random.default_rng(9))
    for field in ("support_index", "query_index", "ref_index"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 3), st.integers(1, 5))
def test_support_query_disjoint(seed, n, k, q):
    raw = gen_synthetic(SyntheticSpec(class_count=12, samples_per_class=10, seed=3))
    ds = split_by_counts(raw, (6, 0, 6))
    ep = sample_episode(ds, EpisodeConfig(n, k, q, 2), "test", np.random.default_rng(seed))
    assert not set(ep.support_index) & set(ep.query_index)
    assert len(set(ep.episode_classes)) == n


def test_small_class_errors_name_the_class():
    x = np.zeros((9, 2))
    raw = Dataset(x, ["a"] * 4 + ["b"] * 4 + ["c"])
    ds = split_dataset(raw, ["a", "b", "c"], [], [])
    with pytest.raises(SamplingError, match="'c'"):
        for seed in range(20):
            sample_episode(ds, EpisodeConfig(3, 1, 2, 0), "train", np.random.default_rng(seed))
    ds2 = split_dataset(raw, ["c"], [], ["a", "b"])
    with pytest.raises(SamplingError, match="reference class 'c'"):
        sample_episode(ds2, EpisodeConfig(2, 1, 2, 1), "test", np.random.default_rng(0))


def test_too_few_phase_classes(ds):
    with pytest.raises(SamplingError):
        sample_episode(ds, EpisodeConfig(6, 1, 1, 0), "test", np.random.default_rng(0))


def test_reference_class_frequency_is_uniform(ds):
    # multinomial oracle: count_c ~ Binomial(n, 1/12); every class within 3 sigma
    rng = np.random.default_rng(123)
    cfg = EpisodeConfig(5, 1, 1, 1)
    counts = dict.fromkeys(ds.classes_in("train"), 0)
    n = 10_000
    for _ in range(n):
        counts[sample_episode(ds, cfg, "test", rng).ref_classes[0]] += 1
    p = 1 / len(counts)
    sigma = np.sqrt(n * p * (1 - p))
    assert max(abs(c - n * p) for c in counts.values()) < 3 * sigma
    assert stats.chisquare(list(counts.values())).pvalue > 1e-3


def test_aux_batch(ds):
    x, y = sample_aux_batch(ds, 4, np.random.default_rng(0))
    assert x.shape == (4, 16) and y.max() < 12
    x2, y2 = sample_aux_batch(ds, 4, np.random.default_rng(0))
    assert x.tobytes() == x2.tobytes() and y.tobytes() == y2.tobytes()


def test_aux_label_reindexing_is_bijection(ds):
    mapping = train_label_map(ds)
    assert sorted(mapping.values()) == list(range(12))
    items, labels = train_items(ds)
    inverse = {i: c for c, i in mapping.items()}
    assert all(ds.labels[it] == inverse[lab] for it, lab in zip(items, labels))


def test_aux_batch_errors(ds):
    with pytest.raises(ConfigError):
        sample_aux_batch(ds, 0, np.random.default_rng(0))
    empty = split_dataset(ds, [], [], ds.classes_in("test"))
    with pytest.raises(ConfigError):
        sample_aux_batch(empty, 4, np.random.default_rng(0))


def test_episode_config_validation():
    for bad in [(1, 1, 1, 0), (2, 0, 1, 0), (2, 1, 0, 0), (2, 1, 1, -1)]:
        with pytest.raises(ConfigError):
            EpisodeConfig(*bad)
