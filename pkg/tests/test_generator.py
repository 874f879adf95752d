import numpy as np
import pytest

from dtn import diffcore as dc
from dtn.extractor import init_affine
from dtn.generator import GeneratorParams, generate, generate_batch, init_generator, phi1_map

from gradcheck import REL_TOL, check


def unit(rng, n, c):
    z = rng.normal(size=(n, c))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@pytest.fixture
def gen():
    return init_generator(np.random.default_rng(0), feature_dim=8, latent_dim=16)


def test_phi1_eval_mode_composition(gen):
    z = unit(np.random.default_rng(1), 3, 8)
    w, b = gen.phi1
    h = z @ w.data + b.data
    np.testing.assert_allclose(phi1_map(gen, z).data, np.where(h >= 0, h, 0.2 * h), atol=1e-15)


def test_phi1_full_scale_width():
    g = init_generator(np.random.default_rng(0), feature_dim=1024, latent_dim=2048)
    out = phi1_map(g, unit(np.random.default_rng(1), 2, 1024))
    assert out.shape == (2, 2048)


def test_phi1_deterministic_under_seed(gen):
    z = unit(np.random.default_rng(1), 2, 8)
    a = phi1_map(gen, z, training=True, rng=np.random.default_rng(5)).data
    b = phi1_map(gen, z, training=True, rng=np.random.default_rng(5)).data
    assert a.tobytes() == b.tobytes()


def test_zero_offset_independent_of_reference(gen):
    rng = np.random.default_rng(2)
    z_s, r, r_other = unit(rng, 1, 8), unit(rng, 1, 8), unit(rng, 1, 8)
    a = generate(gen, z_s, r, r).data
    b = generate(gen, z_s, r_other, r_other).data
    assert a.tobytes() == b.tobytes()
    from dtn.generator import phi2_map
    expected = phi2_map(gen, phi1_map(gen, z_s)).data
    np.testing.assert_allclose(a, expected / np.linalg.norm(expected), atol=1e-15)


def test_identity_construction_hand_evaluated():
    c = 4
    eye = lambda: (dc.tensor(np.eye(c), True), dc.tensor(np.zeros(c), True))
    g = GeneratorParams(eye(), eye())
    z_s = np.array([[0.7, 0.5, 0.4, 0.3]])
    z_r1 = np.array([[0.2, 0.3, 0.6, 0.7]])
    z_r2 = np.array([[0.1, 0.2, 0.5, 0.6]])
    expected = z_s + z_r1 - z_r2
    np.testing.assert_allclose(generate(g, z_s, z_r1, z_r2).data,
                               expected / np.linalg.norm(expected), atol=1e-12)


@pytest.mark.parametrize("n,k,h", [(5, 1, 3), (2, 5, 4), (3, 1, 64)])
def test_generate_batch_counts(gen, n, k, h):
    rng = np.random.default_rng(3)
    out = generate_batch(gen, unit(rng, n * k, 8), (unit(rng, h, 8), unit(rng, h, 8)))
    assert out.shape == (n * k * h, 8)
    np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-9)


def test_generate_batch_empty_when_no_pairs(gen):
    out = generate_batch(gen, unit(np.random.default_rng(0), 5, 8), (np.zeros((0, 8)), np.zeros((0, 8))))
    assert out.shape == (0, 8)


def test_generate_batch_ordering_and_pair_independence(gen):
    rng = np.random.default_rng(4)
    s, r1, r2 = unit(rng, 2, 8), unit(rng, 3, 8), unit(rng, 3, 8)
    full = generate_batch(gen, s, (r1, r2)).data
    for i in range(2):
        for h in range(3):
            single = generate(gen, s[i:i + 1], r1[h:h + 1], r2[h:h + 1]).data
            np.testing.assert_allclose(full[i * 3 + h], single[0], atol=1e-15)
    perm = [2, 0, 1]
    shuffled = generate_batch(gen, s, (r1[perm], r2[perm])).data.reshape(2, 3, 8)
    np.testing.assert_allclose(shuffled, full.reshape(2, 3, 8)[:, perm], atol=1e-15)


def test_latent_antisymmetry(gen):
    rng = np.random.default_rng(5)
    s, a, b = unit(rng, 1, 8), unit(rng, 1, 8), unit(rng, 1, 8)
    ls, la, lb = (phi1_map(gen, v).data for v in (s, a, b))
    forward, reverse = ls + (la - lb), ls + (lb - la)
    np.testing.assert_allclose(forward + reverse, 2 * ls, rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(4))
def test_generator_gradients(seed):
    rng = np.random.default_rng(seed)
    g = init_generator(rng, feature_dim=4, latent_dim=6)
    s, r1, r2 = (dc.tensor(unit(rng, n, 4), True) for n in (2, 3, 3))
    target = rng.normal(size=(6, 4))
    params = [*g.phi1, *g.phi2, s, r1, r2]

    def loss():
        out = generate_batch(g, s, (r1, r2), training=True, rng=np.random.default_rng(seed))
        return dc.sum_all(out * target)

    assert check(loss, params) < REL_TOL
