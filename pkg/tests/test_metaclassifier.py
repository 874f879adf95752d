import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtn import diffcore as dc
from dtn.errors import DegenerateProxyError
from dtn.metaclassifier import (AuxiliaryHead, ProxyMatrix, auxiliary_loss, averaging_matrix,
                                build_proxies, init_aux_head, init_meta_temperature, meta_loss,
                                score_query)

from gradcheck import REL_TOL, check


def unit(rng, n, c):
    z = rng.normal(size=(n, c))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_one_shot_no_generation_is_support():
    z = unit(np.random.default_rng(0), 3, 5)
    p = build_proxies(z, np.zeros((0, 5)), [0, 1, 2], 3)
    np.testing.assert_allclose(p.W.data, z, atol=1e-15)


def test_generated_copy_is_idempotent():
    z = unit(np.random.default_rng(0), 2, 4)
    p = build_proxies(z, z.copy(), [0, 1], 2)
    np.testing.assert_allclose(p.W.data, z, atol=1e-15)


def test_symmetric_average():
    p = build_proxies([[1.0, 0.0]], [[0.0, 1.0]], [0], 1)
    np.testing.assert_allclose(p.W.data, [[math.sqrt(2) / 2] * 2], atol=1e-15)


def test_averaging_matrix_k_shot_h_layout():
    # N=2, K=2, H=3: each class averages K*(H+1) = 8 rows
    a = averaging_matrix([0, 0, 1, 1], 2, 3)
    assert a.shape == (2, 4 + 12)
    np.testing.assert_allclose(a.sum(axis=1), 1.0)
    assert np.count_nonzero(a[0]) == 8
    assert set(np.flatnonzero(a[1][4:]) // 3) == {2, 3}


def test_antipodal_features_raise():
    with pytest.raises(DegenerateProxyError):
        build_proxies([[1.0, 0.0]], [[-1.0, 0.0]], [0], 1)


def test_scores_self_similarity_and_orthogonality():
    w = np.eye(4)[:3]
    p = ProxyMatrix(dc.tensor(w))
    assert score_query(w[1:2], p).data[0, 1] == pytest.approx(1.0)
    np.testing.assert_array_equal(score_query([[0, 0, 0, 1.0]], p).data, [[0, 0, 0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scores_bounded_and_proxies_unit(seed):
    rng = np.random.default_rng(seed)
    n, k, h, c = 3, 2, 4, 6
    p = build_proxies(unit(rng, n * k, c), unit(rng, n * k * h, c), np.repeat(np.arange(n), k), n)
    np.testing.assert_allclose(np.linalg.norm(p.W.data, axis=1), 1.0, atol=1e-9)
    assert np.abs(score_query(unit(rng, 10, c), p).data).max() <= 1 + 1e-9


def test_meta_loss_zero_temperature():
    scores = dc.tensor(np.random.default_rng(0).uniform(-1, 1, (6, 5)))
    assert meta_loss(scores, init_meta_temperature(0.0), [0, 1, 2, 3, 4, 0]).data == pytest.approx(math.log(5))


def test_meta_loss_decreases_monotonically_in_alpha():
    scores = dc.tensor(np.eye(5))
    losses = [float(meta_loss(scores, init_meta_temperature(a), range(5)).data) for a in (1, 2, 5, 10, 20, 40)]
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_argmax_invariant_to_positive_alpha_scaling(seed, factor):
    scores = np.random.default_rng(seed).uniform(-1, 1, (8, 5))
    np.testing.assert_array_equal(softmax(10.0 * scores).argmax(1), softmax(10.0 * factor * scores).argmax(1))


def softmax(logits):
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def test_aux_loss_zero_alpha_is_log_classes():
    rng = np.random.default_rng(0)
    head = init_aux_head(rng, 6, 4, alpha=0.0)
    assert auxiliary_loss(unit(rng, 3, 4), head, [0, 5, 2]).data == pytest.approx(math.log(6))


def test_aux_loss_aligned_feature():
    rng = np.random.default_rng(1)
    head = init_aux_head(rng, 6, 4, alpha=200.0)
    w = head.W_aux.data[3:4] / np.linalg.norm(head.W_aux.data[3])
    assert float(auxiliary_loss(w, head, [3]).data) < 1e-3


def test_aux_loss_label_out_of_range():
    head = init_aux_head(np.random.default_rng(0), 6, 4)
    with pytest.raises(IndexError):
        auxiliary_loss(unit(np.random.default_rng(0), 1, 4), head, [6])


@pytest.mark.parametrize("normalize_rows", [True, False])
@pytest.mark.parametrize("seed", range(3))
def test_aux_loss_gradients(seed, normalize_rows):
    rng = np.random.default_rng(seed)
    head = init_aux_head(rng, 6, 4, alpha=3.0, normalize_rows=normalize_rows)
    z = dc.tensor(unit(rng, 5, 4), True)
    labels = rng.integers(6, size=5)
    params = [z, head.W_aux, head.alpha_aux]
    assert check(lambda: auxiliary_loss(z, head, labels), params) < REL_TOL


def test_aux_head_rows_normalized_on_the_fly():
    head = AuxiliaryHead(dc.tensor([[2.0, 0.0], [0.0, 3.0]], True), dc.tensor(1.0, True))
    unnormalized = AuxiliaryHead(dc.tensor([[2.0, 0.0], [0.0, 3.0]], True), dc.tensor(1.0, True), False)
    z = [[1.0, 0.0]]
    a = auxiliary_loss(z, head, [0]).data
    b = auxiliary_loss(z, unnormalized, [0]).data
    assert a == pytest.approx(math.log(1 + math.exp(-1)))
    assert b == pytest.approx(math.log(1 + math.exp(-2)))
