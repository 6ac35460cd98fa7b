import numpy as np
import pytest

from autopath.embedder import (
    disc_loss,
    embed_unseen,
    encode,
    encode_all,
    init_embedder,
    j2_loss,
    pretrain,
    recon_loss,
    reconstruct,
)
from autopath.errors import ShapeMismatch, UnknownType
from autopath.nn import DenseLayer

from conftest import make_network


@pytest.fixture
def mixed_net():
    return make_network(["P", "Q"], [0, 0, 0, 1, 1], [(0, 3), (3, 0)], dims=[4, 3], kinds=["binary", "continuous"])


def relu(z):
    return np.maximum(z, 0.0)


def test_zero_params_encode_to_zero(mixed_net):
    p = init_embedder(mixed_net, 2, 5, np.random.default_rng(0))
    for layer in p.enc_type + [p.enc_shared]:
        layer.W[:] = 0.0
        layer.b[:] = 0.0
    assert np.all(encode(p, np.ones(4), 0) == 0.0)


def test_identity_encoder_passes_content():
    net = make_network(["P"], [0, 0], [], dims=[3])
    p = init_embedder(net, 3, 3, np.random.default_rng(0))
    p.enc_type[0] = DenseLayer(np.eye(3), np.zeros(3))
    p.enc_shared = DenseLayer(np.eye(3), np.zeros(3))
    a = np.array([0.5, 0.0, 2.0])
    np.testing.assert_array_equal(encode(p, a, 0), a)
    p.dec_shared = DenseLayer(np.eye(3), np.zeros(3))
    p.dec_type[0] = DenseLayer(np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(reconstruct(p, a, 0), a)


def test_dual_implementation(mixed_net):
    p = init_embedder(mixed_net, 4, 6, np.random.default_rng(5))
    a = mixed_net.contents[1][0]
    x = relu(p.enc_shared.W @ relu(p.enc_type[1].W @ a + p.enc_type[1].b) + p.enc_shared.b)
    np.testing.assert_allclose(encode(p, a, 1), x, atol=1e-12)
    h = relu(p.dec_shared.W @ x + p.dec_shared.b)
    np.testing.assert_allclose(reconstruct(p, x, 1), relu(p.dec_type[1].W @ h + p.dec_type[1].b), atol=1e-12)
    z = p.dec_type[0].W @ h + p.dec_type[0].b
    np.testing.assert_allclose(reconstruct(p, x, 0), 1 / (1 + np.exp(-z)), atol=1e-12)


def test_zero_decoder(mixed_net):
    p = init_embedder(mixed_net, 2, 5, np.random.default_rng(0))
    for layer in p.dec_type + [p.dec_shared]:
        layer.W[:] = 0.0
        layer.b[:] = 0.0
    assert np.all(reconstruct(p, np.ones(2), 1) == 0.0)
    assert np.all(reconstruct(p, np.ones(2), 0) == 0.5)


def test_errors(mixed_net):
    p = init_embedder(mixed_net, 2, 5, np.random.default_rng(0))
    with pytest.raises(UnknownType):
        encode(p, np.ones(4), 2)
    with pytest.raises(ShapeMismatch):
        encode(p, np.ones(3), 0)
    with pytest.raises(ShapeMismatch):
        recon_loss(np.ones(2), np.ones(3), "continuous")


def test_recon_loss_examples():
    assert recon_loss([1.0, 2.0], [1.0, 2.0], "continuous") == 0.0
    assert recon_loss([1.0], [0.5], "binary") == pytest.approx(np.log(2))
    assert recon_loss([0.0, 2.0], [1.0, 0.0], "continuous") == pytest.approx(2.5)


def test_disc_loss_examples():
    loss, _ = disc_loss(np.array([1.0, 2.0]), 1, np.zeros((2, 2)))
    assert loss == pytest.approx(np.log(2))
    W = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    loss, g = disc_loss(np.array([1.0, 0.0]), 0, W)
    assert loss == pytest.approx(-np.log(np.e / (np.e + 1 + np.exp(-1))))
    # logits (1, 0, -1): ln(e + 1 + 1/e) - 1
    assert loss == pytest.approx(0.4076, abs=1e-4)
    loss, _ = disc_loss(np.array([50.0, 0.0]), 0, W)
    assert loss < 1e-12


def test_j2_lambda_zero_is_recon(mixed_net):
    p = init_embedder(mixed_net, 3, 5, np.random.default_rng(1))
    nodes = np.arange(5)
    r0 = j2_loss(p, mixed_net, nodes, 0.0)
    assert r0.loss == pytest.approx(r0.recon)
    assert np.all(r0.grads["W_c"] == 0.0)
    manual = np.mean([recon_loss(mixed_net.content(v), reconstruct(p, encode(p, mixed_net.content(v), t), t),
                                 p.kinds[t]) for v, t in zip(nodes, mixed_net.node_types)])
    assert r0.recon == pytest.approx(manual, rel=1e-9)
    r1 = j2_loss(p, mixed_net, nodes, 0.1)
    assert r1.loss == pytest.approx(r1.recon + 0.1 * r1.disc)


def test_gradient_routing(mixed_net):
    p = init_embedder(mixed_net, 3, 5, np.random.default_rng(2))
    res = j2_loss(p, mixed_net, [0, 1], 0.1)  # type-0 nodes only
    assert np.any(res.grads["enc_shared.W"] != 0) and np.any(res.grads["dec_shared.W"] != 0)
    assert np.all(res.grads["enc_type.1.W"] == 0) and np.all(res.grads["dec_type.1.W"] == 0)


def test_cotrain_mode_gives_x_grad(mixed_net):
    p = init_embedder(mixed_net, 3, 5, np.random.default_rng(2))
    X = np.abs(np.random.default_rng(0).normal(size=(5, 3)))
    res = j2_loss(p, mixed_net, [0, 3, 4], 0.1, X=X)
    assert res.x_grad.shape == (3, 3)
    assert "enc_shared.W" not in res.grads


def test_pretrain_zero_epochs(mixed_net):
    res = pretrain(mixed_net, kappa=3, hidden=5, max_epochs=0, rng=np.random.default_rng(0),
                   init_rng=np.random.default_rng(1))
    fresh = init_embedder(mixed_net, 3, 5, np.random.default_rng(1))
    np.testing.assert_array_equal(res.X, encode_all(fresh, mixed_net))
    assert res.epochs == 0


def test_pretrain_reduces_loss(mixed_net):
    res = pretrain(mixed_net, kappa=3, hidden=8, max_epochs=60, batch_size=5, lr=1e-2, rng=np.random.default_rng(0))
    assert res.history[-1] < res.history[0]


def test_embed_unseen(mixed_net):
    p = init_embedder(mixed_net, 3, 5, np.random.default_rng(2))
    enc = p.encoder()
    a = mixed_net.content(0)
    np.testing.assert_array_equal(embed_unseen(enc, a, 0), encode(p, a, 0))
    assert np.all(np.isfinite(embed_unseen(enc, np.zeros(4), 0)))


def test_encoder_snapshot_is_independent(mixed_net):
    p = init_embedder(mixed_net, 3, 5, np.random.default_rng(2))
    enc = p.encoder()
    before = enc.enc_shared.W.copy()
    p.enc_shared.W += 1.0
    np.testing.assert_array_equal(enc.enc_shared.W, before)
